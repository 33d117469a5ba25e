use std::collections::BTreeMap;

use super::MsgType;

/// Message and byte counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub messages: u64,
    pub bytes: u64,
}

impl Tally {
    fn add(&mut self, bytes: usize) {
        self.messages += 1;
        self.bytes += bytes as u64;
    }
}

/// Wire traffic seen by one channel endpoint, sent and received alike,
/// broken down by message type and by frame iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ByteMeter {
    by_type: BTreeMap<MsgType, Tally>,
    by_iteration: BTreeMap<u32, Tally>,
    total: Tally,
}

impl ByteMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, msg_type: MsgType, iteration: u32, bytes: usize) {
        self.by_type.entry(msg_type).or_default().add(bytes);
        self.by_iteration.entry(iteration).or_default().add(bytes);
        self.total.add(bytes);
    }

    pub fn total(&self) -> Tally {
        self.total
    }

    pub fn by_type(&self, msg_type: MsgType) -> Tally {
        self.by_type.get(&msg_type).copied().unwrap_or_default()
    }

    pub fn by_iteration(&self, iteration: u32) -> Tally {
        self.by_iteration.get(&iteration).copied().unwrap_or_default()
    }

    pub fn types(&self) -> impl Iterator<Item = (MsgType, Tally)> + '_ {
        self.by_type.iter().map(|(t, c)| (*t, *c))
    }

    pub fn iterations(&self) -> impl Iterator<Item = (u32, Tally)> + '_ {
        self.by_iteration.iter().map(|(i, c)| (*i, *c))
    }
}
