use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One implicit-feedback event over dense user/item indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// Timestamped listening events with dense re-mappings of the external ids.
///
/// Dense indices are assigned in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    events: Vec<Event>,
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event, mapping ids to dense indices.
    pub fn push(&mut self, user: &str, item: &str, timestamp: i64) -> Result<()> {
        if timestamp < 0 {
            return Err(Error::InvalidConfig(format!("negative timestamp {timestamp}")));
        }
        let user = intern(&mut self.users, &mut self.user_index, user);
        let item = intern(&mut self.items, &mut self.item_index, item);
        self.events.push(Event { user, item, timestamp });
        Ok(())
    }

    /// Registers an item id without an event, so it receives a dense index.
    pub fn register_item(&mut self, item: &str) -> usize {
        intern(&mut self.items, &mut self.item_index, item)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_id(&self, external: &str) -> Option<usize> {
        self.user_index.get(external).copied()
    }

    pub fn item_id(&self, external: &str) -> Option<usize> {
        self.item_index.get(external).copied()
    }

    pub fn time_range(&self) -> Option<(i64, i64)> {
        let min = self.events.iter().map(|e| e.timestamp).min()?;
        let max = self.events.iter().map(|e| e.timestamp).max()?;
        Some((min, max))
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Writes `user<TAB>item<TAB>timestamp` lines.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        write_events(&self.events, self, out)
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&i) = index.get(name) {
        return i;
    }
    let i = names.len();
    names.push(name.to_string());
    index.insert(name.to_string(), i);
    i
}

/// Writes events with their external ids as TSV.
pub fn write_events<W: Write>(events: &[Event], log: &InteractionLog, mut out: W) -> Result<()> {
    for e in events {
        writeln!(out, "{}\t{}\t{}", log.users[e.user], log.items[e.item], e.timestamp)?;
    }
    Ok(())
}

/// Parses one `user<TAB>item<TAB>unix_timestamp` line; `None` for blank and
/// `#` comment lines.
fn parse_line(line: &str, lineno: usize) -> Result<Option<(&str, &str, i64)>> {
    let line = line.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected 3 tab-separated fields, found {}", fields.len()),
        });
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(Error::Parse {
            line: lineno,
            message: "empty user or item id".into(),
        });
    }
    let ts: i64 = fields[2].trim().parse().map_err(|_| Error::Parse {
        line: lineno,
        message: format!("invalid timestamp `{}`", fields[2]),
    })?;
    if ts < 0 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("negative timestamp {ts}"),
        });
    }
    Ok(Some((fields[0], fields[1], ts)))
}

/// Reads an interaction TSV stream.
pub fn parse_interactions<R: BufRead>(reader: R) -> Result<InteractionLog> {
    let mut log = InteractionLog::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some((u, it, ts)) = parse_line(&line, i + 1)? {
            log.push(u, it, ts)?;
        }
    }
    if log.is_empty() {
        return Err(Error::EmptyInput("interaction log has no events"));
    }
    Ok(log)
}

/// Reads events for an existing log's id space (used for split partitions).
/// Unknown ids are a parse error.
pub fn parse_events_for<R: BufRead>(reader: R, log: &InteractionLog) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let Some((u, it, ts)) = parse_line(&line, i + 1)? else {
            continue;
        };
        let unknown = |what: &str, id: &str| Error::Parse {
            line: i + 1,
            message: format!("unknown {what} `{id}`"),
        };
        let user = log.user_id(u).ok_or_else(|| unknown("user", u))?;
        let item = log.item_id(it).ok_or_else(|| unknown("item", it))?;
        events.push(Event { user, item, timestamp: ts });
    }
    Ok(events)
}
