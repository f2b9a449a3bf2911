use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::{BindingRequirement, ResourceDescriptor, ResourceError};

struct Entry {
    descriptor: Arc<ResourceDescriptor>,
    withdrawn: bool,
}

/// The resource-layer view of registered calculator + program pairs.
///
/// Readers (`discover`, `get`) run concurrently; `register` and `withdraw`
/// take the write lock. Withdrawn resources stay resolvable by id but are
/// never discovered again.
#[derive(Default)]
pub struct Registry {
    entries: RwLock<BTreeMap<String, Entry>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, d: ResourceDescriptor) -> Result<String, ResourceError> {
        d.validate()?;
        let mut entries = self.entries.write().unwrap_or_else(|p| p.into_inner());
        if entries.contains_key(&d.id) {
            return Err(ResourceError::DuplicateResource(d.id));
        }
        let id = d.id.clone();
        entries.insert(id.clone(), Entry { descriptor: Arc::new(d), withdrawn: false });
        Ok(id)
    }

    /// Ids of live resources satisfying `req`, cheapest first, ties by id.
    pub fn discover(&self, req: &BindingRequirement) -> Vec<String> {
        let entries = self.entries.read().unwrap_or_else(|p| p.into_inner());
        let mut hits: Vec<&ResourceDescriptor> = entries
            .values()
            .filter(|e| !e.withdrawn && req.matches(&e.descriptor))
            .map(|e| e.descriptor.as_ref())
            .collect();
        hits.sort_by(|a, b| a.cost_weight.total_cmp(&b.cost_weight).then_with(|| a.id.cmp(&b.id)));
        hits.into_iter().map(|d| d.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<Arc<ResourceDescriptor>> {
        self.entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .map(|e| e.descriptor.clone())
    }

    pub fn is_withdrawn(&self, id: &str) -> Option<bool> {
        self.entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .map(|e| e.withdrawn)
    }

    /// Marks a resource unavailable. Job bookkeeping is the broker's job.
    pub(crate) fn mark_withdrawn(&self, id: &str) -> Result<(), ResourceError> {
        let mut entries = self.entries.write().unwrap_or_else(|p| p.into_inner());
        let e = entries
            .get_mut(id)
            .ok_or_else(|| ResourceError::UnknownResource(id.to_string()))?;
        e.withdrawn = true;
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    pub fn descriptors(&self) -> Vec<Arc<ResourceDescriptor>> {
        self.entries
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .map(|e| e.descriptor.clone())
            .collect()
    }
}
