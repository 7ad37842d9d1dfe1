//! Name-keyed factories for the interchangeable pieces of a run: target
//! densities, drift rules, bandwidth policies and approximation methods.

use serde_json::Value;

use crate::error::{Error, Result};

pub type Factory<T> = Box<dyn Fn(&Value) -> Result<Box<T>> + Send + Sync>;

struct Entry<T: ?Sized> {
    name: &'static str,
    summary: &'static str,
    build: Factory<T>,
}

/// Ordered registry of named constructors for trait objects of type `T`.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Register `build` under `name`. Names are unique.
    pub fn register<F>(&mut self, name: &'static str, summary: &'static str, build: F) -> Result<()>
    where
        F: Fn(&Value) -> Result<Box<T>> + Send + Sync + 'static,
    {
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::config(format!(
                "{} `{name}` registered twice",
                self.kind
            )));
        }
        self.entries.push(Entry {
            name,
            summary,
            build: Box::new(build),
        });
        Ok(())
    }

    pub fn with<F>(mut self, name: &'static str, summary: &'static str, build: F) -> Self
    where
        F: Fn(&Value) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.register(name, summary, build)
            .expect("builtin registry names are unique");
        self
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|e| (e.name, e.summary)).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Box<T>> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })?;
        (entry.build)(params)
    }
}
