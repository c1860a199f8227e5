use std::collections::BTreeMap;

use rayon::prelude::*;

use super::GeoEvent;

/// Time-ordered events of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    user_id: String,
    events: Vec<GeoEvent>,
}

impl Trajectory {
    /// Sorts `events` by timestamp (stable) and checks they share `user_id`.
    pub fn new(user_id: impl Into<String>, mut events: Vec<GeoEvent>) -> Result<Self, String> {
        let user_id = user_id.into();
        if let Some(e) = events.iter().find(|e| e.user_id != user_id) {
            return Err(format!("event of user {:?} in trajectory of {:?}", e.user_id, user_id));
        }
        events.sort_by_key(|e| e.timestamp);
        Ok(Self { user_id, events })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn events(&self) -> &[GeoEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<GeoEvent> {
        self.events
    }

    /// Keeps the events for which `keep` returns true; order is preserved.
    pub fn retain(&mut self, keep: impl FnMut(&GeoEvent) -> bool) {
        self.events.retain(keep);
    }
}

/// Groups events by user. Within a user the order is (timestamp, input order).
pub fn build_trajectories(events: Vec<GeoEvent>) -> BTreeMap<String, Trajectory> {
    let mut groups: BTreeMap<String, Vec<GeoEvent>> = BTreeMap::new();
    for e in events {
        groups.entry(e.user_id.clone()).or_default().push(e);
    }
    groups.par_iter_mut().for_each(|(_, evs)| evs.sort_by_key(|e| e.timestamp));
    groups.into_iter().map(|(user_id, events)| (user_id.clone(), Trajectory { user_id, events })).collect()
}
