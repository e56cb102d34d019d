use std::collections::BTreeMap;
use std::sync::Mutex;

use super::record::TaskEntry;
use crate::agents::AgentName;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("shared memory already holds an entry for {0}")]
pub struct WriteOnceViolation(pub AgentName);

/// Per-patient store of completed node outputs. Each key is written once;
/// readers only ever see published entries.
#[derive(Debug, Default)]
pub struct SharedMemory {
    entries: Mutex<BTreeMap<AgentName, TaskEntry>>,
}

impl SharedMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, entry: TaskEntry) -> Result<(), WriteOnceViolation> {
        let mut entries = self.entries.lock().expect("shared memory poisoned");
        if entries.contains_key(&entry.agent) {
            return Err(WriteOnceViolation(entry.agent));
        }
        entries.insert(entry.agent, entry);
        Ok(())
    }

    pub fn text(&self, agent: AgentName) -> Option<String> {
        self.entries.lock().expect("shared memory poisoned").get(&agent).map(|e| e.response_text.clone())
    }

    /// Response texts of the requested agents that have been published.
    pub fn texts(&self, agents: &[AgentName]) -> BTreeMap<AgentName, String> {
        let entries = self.entries.lock().expect("shared memory poisoned");
        agents
            .iter()
            .filter_map(|a| entries.get(a).map(|e| (*a, e.response_text.clone())))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("shared memory poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_entries(self) -> BTreeMap<AgentName, TaskEntry> {
        self.entries.into_inner().expect("shared memory poisoned")
    }
}
