//! Deterministic app simulator behind the driver contract.
//!
//! The [`Driver`] trait is the seam between everything above it (ripping,
//! concretization, execution) and the app under test. [`SimDriver`] is the
//! bundled backend: it interprets an [`AppSpec`] file that declares GUI
//! states, UI actions, the `req` events each action emits, and the resource
//! cost each action charges. Real-device backends can implement the same
//! trait without touching the layers above.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{EventName, StateId};

/// A view property value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropValue {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl PropValue {
    fn canonical(&self) -> String {
        match self {
            PropValue::Bool(b) => format!("b:{b}"),
            PropValue::Int(i) => format!("i:{i}"),
            PropValue::Str(s) => format!("s:{s}"),
        }
    }
}

/// One visible view: an id plus a property map.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct View {
    pub id: String,
    pub properties: BTreeMap<String, PropValue>,
}

impl View {
    fn truthy(&self, key: &str) -> bool {
        matches!(self.properties.get(key), Some(PropValue::Bool(true)))
    }
}

/// A GUI state: the set of visible views plus a canonical digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiState {
    /// Views sorted by id.
    pub views: Vec<View>,
    /// Digest over the sorted `(view id, key, value)` triples, minus any
    /// ignored property keys. Equal view sets produce equal signatures.
    pub signature: String,
}

impl GuiState {
    pub fn new(mut views: Vec<View>, ignored_keys: &BTreeSet<String>) -> Self {
        views.sort();
        let signature = signature_of(&views, ignored_keys);
        GuiState { views, signature }
    }
}

fn signature_of(views: &[View], ignored_keys: &BTreeSet<String>) -> String {
    let mut hasher = Sha256::new();
    let mut sorted: Vec<&View> = views.iter().collect();
    sorted.sort();
    for view in sorted {
        for (key, value) in &view.properties {
            if ignored_keys.contains(key) {
                continue;
            }
            hasher.update(view.id.as_bytes());
            hasher.update([0x1f]);
            hasher.update(key.as_bytes());
            hasher.update([0x1f]);
            hasher.update(value.canonical().as_bytes());
            hasher.update([0x1e]);
        }
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Scroll direction for [`UiAction::Scroll`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

impl fmt::Display for ScrollDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
            ScrollDirection::Left => "left",
            ScrollDirection::Right => "right",
        };
        f.write_str(s)
    }
}

/// A UI interaction the driver can perform.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum UiAction {
    #[serde(rename = "touch")]
    Touch { target: String },
    #[serde(rename = "longTouch")]
    LongTouch { target: String },
    #[serde(rename = "setText")]
    SetText { target: String, text: String },
    #[serde(rename = "keyEvent")]
    KeyEvent { key: String },
    #[serde(rename = "scroll")]
    Scroll { direction: ScrollDirection },
}

impl UiAction {
    pub fn touch(target: impl Into<String>) -> Self {
        UiAction::Touch {
            target: target.into(),
        }
    }

    pub fn key_event(key: impl Into<String>) -> Self {
        UiAction::KeyEvent { key: key.into() }
    }

    /// Canonical encoding, also the lexicographic tie-break key for path
    /// enumeration.
    pub fn encode(&self) -> String {
        match self {
            UiAction::Touch { target } => format!("touch({target})"),
            UiAction::LongTouch { target } => format!("longTouch({target})"),
            UiAction::SetText { target, text } => format!("setText({target},{text})"),
            UiAction::KeyEvent { key } => format!("keyEvent({key})"),
            UiAction::Scroll { direction } => format!("scroll({direction})"),
        }
    }
}

impl fmt::Display for UiAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl PartialOrd for UiAction {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for UiAction {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.encode().cmp(&other.encode())
    }
}

/// Declared resource usage of one action or launch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    pub cpu_ms: u64,
    pub alloc_kb: u64,
    pub free_kb: u64,
    pub energy_units: f64,
}

impl CostVector {
    pub const ZERO: CostVector = CostVector {
        cpu_ms: 0,
        alloc_kb: 0,
        free_kb: 0,
        energy_units: 0.0,
    };

    fn validate(&self) -> Result<(), AppSpecError> {
        if !self.energy_units.is_finite() || self.energy_units < 0.0 {
            return Err(AppSpecError::InvalidCost(format!(
                "energy_units must be finite and non-negative, got {}",
                self.energy_units
            )));
        }
        Ok(())
    }
}

/// One declared GUI state of the app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppState {
    pub id: StateId,
    pub views: Vec<View>,
}

/// One declared transition of the app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppTransition {
    pub from: StateId,
    pub action: UiAction,
    pub to: StateId,
    /// `req` events emitted while handling the action, in order.
    pub emits: Vec<EventName>,
    pub cost: CostVector,
}

/// Errors raised while loading an app spec.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AppSpecError {
    #[error("app spec is not valid JSON: {0}")]
    Json(String),
    #[error("unknown state `{0}` referenced by a transition or `initial`")]
    UnknownState(StateId),
    #[error("state `{state}` has no view `{view}`")]
    UnknownView { state: StateId, view: String },
    #[error("view `{view}` in state `{state}` is not {required}")]
    ViewNotUsable {
        state: StateId,
        view: String,
        required: &'static str,
    },
    #[error("duplicate state id `{0}`")]
    DuplicateState(StateId),
    #[error("duplicate view id `{view}` in state `{state}`")]
    DuplicateView { state: StateId, view: String },
    #[error("two transitions defined for ({state}, {action})")]
    NondeterministicTransition { state: StateId, action: String },
    #[error("emitted event `{0}` is not in the declared event universe")]
    UnknownEvent(EventName),
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("memory accounting violation: {0}")]
    AccountingViolation(String),
}

/// Validated description of a simulated app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub name: String,
    pub launch_time_ms: u64,
    pub launch_alloc_kb: u64,
    /// All events the app may emit; a superset of any enforcer alphabet.
    pub event_universe: Vec<EventName>,
    pub initial: StateId,
    pub states: Vec<AppState>,
    pub transitions: Vec<AppTransition>,
}

impl AppSpec {
    /// Parses and validates an app spec file.
    pub fn parse(text: &str) -> Result<Self, AppSpecError> {
        let spec: AppSpec =
            serde_json::from_str(text).map_err(|e| AppSpecError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn state(&self, id: &str) -> Option<&AppState> {
        self.states.iter().find(|s| s.id == id)
    }

    fn validate(&self) -> Result<(), AppSpecError> {
        let mut ids = BTreeSet::new();
        for state in &self.states {
            if !ids.insert(&state.id) {
                return Err(AppSpecError::DuplicateState(state.id.clone()));
            }
            let mut views = BTreeSet::new();
            for view in &state.views {
                if !views.insert(&view.id) {
                    return Err(AppSpecError::DuplicateView {
                        state: state.id.clone(),
                        view: view.id.clone(),
                    });
                }
            }
        }
        if self.state(&self.initial).is_none() {
            return Err(AppSpecError::UnknownState(self.initial.clone()));
        }
        let universe: BTreeSet<&EventName> = self.event_universe.iter().collect();
        let mut defined = BTreeSet::new();
        for t in &self.transitions {
            let from = self
                .state(&t.from)
                .ok_or_else(|| AppSpecError::UnknownState(t.from.clone()))?;
            if self.state(&t.to).is_none() {
                return Err(AppSpecError::UnknownState(t.to.clone()));
            }
            if !defined.insert((t.from.clone(), t.action.clone())) {
                return Err(AppSpecError::NondeterministicTransition {
                    state: t.from.clone(),
                    action: t.action.encode(),
                });
            }
            self.validate_target(from, &t.action)?;
            for event in &t.emits {
                if !universe.contains(event) {
                    return Err(AppSpecError::UnknownEvent(event.clone()));
                }
            }
            t.cost.validate()?;
        }
        self.validate_accounting()?;
        Ok(())
    }

    fn validate_target(&self, state: &AppState, action: &UiAction) -> Result<(), AppSpecError> {
        let (target, required) = match action {
            UiAction::Touch { target } | UiAction::LongTouch { target } => (target, "clickable"),
            UiAction::SetText { target, .. } => (target, "editable"),
            UiAction::KeyEvent { .. } | UiAction::Scroll { .. } => return Ok(()),
        };
        let view = state
            .views
            .iter()
            .find(|v| &v.id == target)
            .ok_or_else(|| AppSpecError::UnknownView {
                state: state.id.clone(),
                view: target.clone(),
            })?;
        if !view.truthy(required) {
            return Err(AppSpecError::ViewNotUsable {
                state: state.id.clone(),
                view: target.clone(),
                required,
            });
        }
        Ok(())
    }

    /// Rejects specs that admit a run whose cumulative frees exceed its
    /// cumulative allocations (launch allocation included). Relaxes minimal
    /// achievable balances; an improvement after `|states|` rounds means a
    /// reachable negative cycle, which would eventually drive the balance
    /// below zero.
    fn validate_accounting(&self) -> Result<(), AppSpecError> {
        let index: BTreeMap<&StateId, usize> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (&s.id, i))
            .collect();
        let mut best: Vec<Option<i128>> = vec![None; self.states.len()];
        best[index[&self.initial]] = Some(self.launch_alloc_kb as i128);
        let rounds = self.states.len() + 1;
        for round in 0..rounds {
            let mut changed = false;
            for t in &self.transitions {
                let Some(from_balance) = best[index[&t.from]] else {
                    continue;
                };
                let balance = from_balance + t.cost.alloc_kb as i128 - t.cost.free_kb as i128;
                if balance < 0 {
                    return Err(AppSpecError::AccountingViolation(format!(
                        "a run reaching `{}` via {} frees {} kb more than it ever allocated",
                        t.to,
                        t.action.encode(),
                        -balance
                    )));
                }
                let slot = &mut best[index[&t.to]];
                if slot.is_none_or(|b| balance < b) {
                    *slot = Some(balance);
                    changed = true;
                }
            }
            if changed && round == rounds - 1 {
                return Err(AppSpecError::AccountingViolation(
                    "a reachable cycle frees more than it allocates".into(),
                ));
            }
            if !changed {
                break;
            }
        }
        Ok(())
    }
}

/// Errors raised by a driver during interaction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriverError {
    #[error("stale state argument: driver is in `{current}`, got `{argument}`")]
    StaleState { current: String, argument: String },
    #[error("no transition defined for {action} in the current state")]
    UndefinedAction { action: String },
    #[error("driver failure: {0}")]
    Backend(String),
}

/// Contract through which ripping and test execution interact with an app.
///
/// Implementations must be deterministic: replaying any action sequence from
/// `reset` yields identical states, emissions, and costs.
pub trait Driver {
    /// Relaunches the app; returns the initial state, the launch time, and
    /// the launch cost (its `alloc_kb` seeds the memory accountant).
    fn reset(&mut self) -> (GuiState, u64, CostVector);

    /// Actions with a defined transition from the current state, in spec
    /// declaration order. `state` must be the current state.
    fn available_actions(&self, state: &GuiState) -> Result<Vec<UiAction>, DriverError>;

    /// Performs an action; returns the next state, the emitted `req` events
    /// in order, and the declared cost.
    fn perform(
        &mut self,
        action: &UiAction,
    ) -> Result<(GuiState, Vec<EventName>, CostVector), DriverError>;
}

/// Deterministic simulator backend for [`Driver`].
#[derive(Debug, Clone)]
pub struct SimDriver {
    spec: AppSpec,
    ignored_keys: BTreeSet<String>,
    current: StateId,
}

impl SimDriver {
    pub fn new(spec: AppSpec) -> Self {
        let current = spec.initial.clone();
        SimDriver {
            spec,
            ignored_keys: BTreeSet::new(),
            current,
        }
    }

    /// Property keys excluded from state signatures (volatile text and the
    /// like).
    pub fn with_ignored_keys(
        spec: AppSpec,
        ignored_keys: impl IntoIterator<Item = String>,
    ) -> Self {
        let current = spec.initial.clone();
        SimDriver {
            spec,
            ignored_keys: ignored_keys.into_iter().collect(),
            current,
        }
    }

    pub fn spec(&self) -> &AppSpec {
        &self.spec
    }

    fn gui_state(&self, id: &str) -> GuiState {
        let state = self.spec.state(id).expect("validated state id");
        GuiState::new(state.views.clone(), &self.ignored_keys)
    }
}

impl Driver for SimDriver {
    fn reset(&mut self) -> (GuiState, u64, CostVector) {
        self.current = self.spec.initial.clone();
        let cost = CostVector {
            cpu_ms: 0,
            alloc_kb: self.spec.launch_alloc_kb,
            free_kb: 0,
            energy_units: 0.0,
        };
        (
            self.gui_state(&self.current),
            self.spec.launch_time_ms,
            cost,
        )
    }

    fn available_actions(&self, state: &GuiState) -> Result<Vec<UiAction>, DriverError> {
        let current = self.gui_state(&self.current);
        if state.signature != current.signature {
            return Err(DriverError::StaleState {
                current: current.signature,
                argument: state.signature.clone(),
            });
        }
        Ok(self
            .spec
            .transitions
            .iter()
            .filter(|t| t.from == self.current)
            .map(|t| t.action.clone())
            .collect())
    }

    fn perform(
        &mut self,
        action: &UiAction,
    ) -> Result<(GuiState, Vec<EventName>, CostVector), DriverError> {
        let t = self
            .spec
            .transitions
            .iter()
            .find(|t| t.from == self.current && &t.action == action)
            .ok_or_else(|| DriverError::UndefinedAction {
                action: action.encode(),
            })?;
        self.current = t.to.clone();
        Ok((
            self.gui_state(&self.current),
            t.emits.clone(),
            t.cost.clone(),
        ))
    }
}
