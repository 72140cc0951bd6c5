//! Stub actions dispatched by `call`. Real skill libraries plug in here.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::sim::Workcell;

/// What an action sees when invoked.
pub struct ActionCall<'a> {
    pub action: &'a str,
    pub items: &'a [String],
    pub workcell: &'a mut Workcell,
    pub log: &'a mut Vec<String>,
}

pub type ActionFn = Arc<dyn Fn(&mut ActionCall<'_>) -> Result<(), String> + Send + Sync>;

#[derive(Clone)]
struct Registered {
    forward: ActionFn,
    reverse: Option<ActionFn>,
}

/// Name to callback map. Actions registered with a reverse callback are
/// always reversible; all others are never reversible.
#[derive(Clone)]
pub struct ActionRegistry {
    actions: BTreeMap<String, Registered>,
}

impl std::fmt::Debug for ActionRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.actions.keys()).finish()
    }
}

impl Default for ActionRegistry {
    /// Registry holding the built-in `noop` and `log` actions.
    fn default() -> Self {
        let mut r = ActionRegistry::empty();
        r.register("noop", |_| Ok(()));
        r.register("log", |call| {
            call.log.push(format!("{}: {}", call.action, call.items.join(" ")));
            Ok(())
        });
        r
    }
}

impl ActionRegistry {
    pub fn empty() -> Self {
        ActionRegistry { actions: BTreeMap::new() }
    }

    pub fn register<F>(&mut self, name: &str, forward: F)
    where
        F: Fn(&mut ActionCall<'_>) -> Result<(), String> + Send + Sync + 'static,
    {
        self.actions.insert(name.to_string(), Registered { forward: Arc::new(forward), reverse: None });
    }

    pub fn register_reversible<F, G>(&mut self, name: &str, forward: F, reverse: G)
    where
        F: Fn(&mut ActionCall<'_>) -> Result<(), String> + Send + Sync + 'static,
        G: Fn(&mut ActionCall<'_>) -> Result<(), String> + Send + Sync + 'static,
    {
        self.actions
            .insert(name.to_string(), Registered { forward: Arc::new(forward), reverse: Some(Arc::new(reverse)) });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }

    pub fn has_reverse(&self, name: &str) -> bool {
        self.actions.get(name).is_some_and(|r| r.reverse.is_some())
    }

    pub fn forward(&self, name: &str) -> Option<ActionFn> {
        self.actions.get(name).map(|r| r.forward.clone())
    }

    pub fn reverse(&self, name: &str) -> Option<ActionFn> {
        self.actions.get(name).and_then(|r| r.reverse.clone())
    }
}
