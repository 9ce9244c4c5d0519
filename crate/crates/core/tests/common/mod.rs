#![allow(dead_code)]

use parbench::data::{temporal_split, DatasetSplit, SplitIndex, SplitParams};
use parbench::synth::{generate, SynthConfig, SynthData};
use parbench::Matrix;

pub struct Fixture {
    pub data: SynthData,
    pub split: DatasetSplit,
    pub index: SplitIndex,
    pub par: Matrix,
}

pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_users: 120,
        n_items: 300,
        latent_dim: 4,
        embed_dim: 12,
        events_per_user: 30,
        offset_norm: 3.0,
        seed,
        ..SynthConfig::default()
    }
}

pub fn fixture(config: &SynthConfig) -> Fixture {
    let data = generate(config).unwrap();
    let split = temporal_split(&data.log, SplitParams::last_month(&data.log, 0).unwrap()).unwrap();
    let index = SplitIndex::new(&split);
    let par = data.table.align(data.log.items()).unwrap();
    Fixture { data, split, index, par }
}

pub fn small(seed: u64) -> Fixture {
    fixture(&small_config(seed))
}
