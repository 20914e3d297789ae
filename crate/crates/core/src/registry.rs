//! Named, runtime-selectable strategies.

use thiserror::Error;

use crate::corpus::{CpRepr, RemiRepr, Representation};
use crate::sampling::{GreedySampler, NucleusSampler, TokenSampler};

#[derive(Debug, Error, PartialEq)]
#[error("unknown {kind} '{name}' (known: {known})")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
    pub known: String,
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: Vec::new() }
    }

    /// Adds or replaces the entry called `name`.
    pub fn register(&mut self, name: &'static str, item: Box<T>) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name, item)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&T, UnknownName> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, b)| b.as_ref())
            .ok_or_else(|| UnknownName {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}

pub fn samplers() -> Registry<dyn TokenSampler> {
    let mut r: Registry<dyn TokenSampler> = Registry::new("sampler");
    for s in [Box::new(NucleusSampler) as Box<dyn TokenSampler>, Box::new(GreedySampler)] {
        r.register(s.name(), s);
    }
    r
}

pub fn representations() -> Registry<dyn Representation> {
    let mut r: Registry<dyn Representation> = Registry::new("representation");
    for s in [Box::new(RemiRepr) as Box<dyn Representation>, Box::new(CpRepr)] {
        r.register(s.name(), s);
    }
    r
}
