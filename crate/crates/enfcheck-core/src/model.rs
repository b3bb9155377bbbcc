//! Enforcement models and policy monitors.
//!
//! An enforcement model is a deterministic, partially specified input/output
//! automaton: it maps an intercepted `req` event to a (possibly empty)
//! sequence of emitted `api` events and a successor state. A policy monitor
//! is a total automaton over the same alphabet whose violating states are
//! traps; a finite trace violates the policy as soon as the monitor enters a
//! violating state.
//!
//! Both are read from the same line-oriented text format:
//!
//! ```text
//! alphabet: camera.open, camera.release, activity.onPause
//! states: s0, s1
//! initial: s0
//! s0 --camera.open--> s1 / camera.open
//! ```
//!
//! Monitor files add a `violating:` header and omit the `/ output` part of
//! transition lines. Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A state identifier as declared in a model file.
pub type StateId = String;
/// An event name drawn from a declared alphabet.
pub type EventName = String;

/// Whether an event is intercepted (`req`) or emitted (`api`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Req,
    Api,
}

/// A named event together with its role on a transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub name: EventName,
    pub kind: EventKind,
}

impl Event {
    pub fn req(name: impl Into<String>) -> Self {
        Event {
            name: name.into(),
            kind: EventKind::Req,
        }
    }

    pub fn api(name: impl Into<String>) -> Self {
        Event {
            name: name.into(),
            kind: EventKind::Api,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Input/output automaton notation: inputs queried, outputs emitted.
        match self.kind {
            EventKind::Req => write!(f, "{}?", self.name),
            EventKind::Api => write!(f, "{}!", self.name),
        }
    }
}

/// Errors raised while parsing, validating, or simulating models.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate transition for ({state}, {event})")]
    Nondeterminism {
        line: usize,
        state: StateId,
        event: EventName,
    },
    #[error("unknown state `{0}`")]
    UnknownState(StateId),
    #[error("event `{0}` is not in the declared alphabet")]
    UnknownEvent(EventName),
    #[error("state `{0}` is not reachable from the initial state")]
    UnreachableState(StateId),
    #[error("monitor step is not total: ({state}, {event}) is undefined")]
    MonitorNotTotal { state: StateId, event: EventName },
    #[error("violating state `{state}` has an edge leaving the violating set on `{event}`")]
    ViolatingEscape { state: StateId, event: EventName },
    #[error("the initial state may not be violating")]
    InitialViolating,
    #[error("undefined transition at input {index}: ({state}, {event})")]
    UndefinedTransition {
        index: usize,
        state: StateId,
        event: EventName,
    },
    #[error("invalid usage: {0}")]
    Usage(String),
}

/// One defined transition of an enforcement model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTransition {
    /// Emitted `api` events, in emission order. May be empty (suppression).
    pub outputs: Vec<EventName>,
    pub next: StateId,
}

/// Deterministic, partially specified input/output automaton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnforcementModel {
    /// States in declaration order.
    pub states: Vec<StateId>,
    pub initial: StateId,
    /// Alphabet in declaration order; this order is the canonical tie-break
    /// order for every downstream construction.
    pub alphabet: Vec<EventName>,
    pub transitions: BTreeMap<(StateId, EventName), ModelTransition>,
}

/// Result of folding an enforcement model over an input sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRun {
    /// All emitted events, concatenated in order.
    pub outputs: Vec<EventName>,
    /// State reached after the last input.
    pub final_state: StateId,
    /// Index of the first input whose emitted events differ from the echoed
    /// input; `None` when the model left the whole sequence untouched.
    pub divergence: Option<usize>,
}

impl EnforcementModel {
    /// Parses and validates a model file.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let raw = RawAutomaton::parse(text, OutputLists::Required)?;
        if let Some((line, _)) = raw.violating_decl {
            return Err(ModelError::Syntax {
                line,
                message: "`violating:` is only valid in policy monitor files".into(),
            });
        }
        let mut transitions = BTreeMap::new();
        for t in &raw.transitions {
            let key = (t.from.clone(), t.event.clone());
            if transitions
                .insert(
                    key,
                    ModelTransition {
                        outputs: t.outputs.clone(),
                        next: t.to.clone(),
                    },
                )
                .is_some()
            {
                return Err(ModelError::Nondeterminism {
                    line: t.line,
                    state: t.from.clone(),
                    event: t.event.clone(),
                });
            }
        }
        let model = EnforcementModel {
            states: raw.states,
            initial: raw.initial,
            alphabet: raw.alphabet,
            transitions,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let states: BTreeSet<&StateId> = self.states.iter().collect();
        let alphabet: BTreeSet<&EventName> = self.alphabet.iter().collect();
        if !states.contains(&self.initial) {
            return Err(ModelError::UnknownState(self.initial.clone()));
        }
        for ((from, event), t) in &self.transitions {
            if !states.contains(from) {
                return Err(ModelError::UnknownState(from.clone()));
            }
            if !states.contains(&t.next) {
                return Err(ModelError::UnknownState(t.next.clone()));
            }
            if !alphabet.contains(event) {
                return Err(ModelError::UnknownEvent(event.clone()));
            }
            for out in &t.outputs {
                if !alphabet.contains(out) {
                    return Err(ModelError::UnknownEvent(out.clone()));
                }
            }
        }
        // Breadth-first reachability from the initial state.
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.initial.clone());
        queue.push_back(self.initial.clone());
        while let Some(state) = queue.pop_front() {
            for event in &self.alphabet {
                if let Some(t) = self.transitions.get(&(state.clone(), event.clone())) {
                    if seen.insert(t.next.clone()) {
                        queue.push_back(t.next.clone());
                    }
                }
            }
        }
        for state in &self.states {
            if !seen.contains(state) {
                return Err(ModelError::UnreachableState(state.clone()));
            }
        }
        Ok(())
    }

    /// Position of an event in the declared alphabet.
    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|e| e == name)
    }

    /// The defined transition for `(state, input)`, or `None` where the model
    /// is partial. Unknown states and non-alphabet inputs are usage errors.
    pub fn step(&self, state: &str, input: &str) -> Result<Option<&ModelTransition>, ModelError> {
        if !self.states.iter().any(|s| s == state) {
            return Err(ModelError::UnknownState(state.to_string()));
        }
        if self.event_index(input).is_none() {
            return Err(ModelError::UnknownEvent(input.to_string()));
        }
        Ok(self
            .transitions
            .get(&(state.to_string(), input.to_string())))
    }

    /// Folds [`step`](Self::step) over `inputs` from the initial state.
    pub fn run_trace(&self, inputs: &[EventName]) -> Result<TraceRun, ModelError> {
        self.run_trace_from(&self.initial, inputs)
    }

    /// Folds [`step`](Self::step) over `inputs` from an arbitrary state.
    pub fn run_trace_from(
        &self,
        start: &str,
        inputs: &[EventName],
    ) -> Result<TraceRun, ModelError> {
        let mut state = start.to_string();
        let mut outputs = Vec::new();
        let mut divergence = None;
        for (index, input) in inputs.iter().enumerate() {
            let t = self
                .step(&state, input)?
                .ok_or(ModelError::UndefinedTransition {
                    index,
                    state: state.clone(),
                    event: input.clone(),
                })?;
            if divergence.is_none() && t.outputs.as_slice() != std::slice::from_ref(input) {
                divergence = Some(index);
            }
            outputs.extend(t.outputs.iter().cloned());
            state = t.next.clone();
        }
        Ok(TraceRun {
            outputs,
            final_state: state,
            divergence,
        })
    }

    /// True when `inputs` has a defined transition at every step.
    pub fn is_defined_from(&self, start: &str, inputs: &[EventName]) -> bool {
        let mut state = start.to_string();
        for input in inputs {
            match self.transitions.get(&(state.clone(), input.clone())) {
                Some(t) => state = t.next.clone(),
                None => return false,
            }
        }
        true
    }

    /// Canonical text form; parsing it back yields an identical model.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("alphabet: {}\n", self.alphabet.join(", ")));
        out.push_str(&format!("states: {}\n", self.states.join(", ")));
        out.push_str(&format!("initial: {}\n", self.initial));
        for state in &self.states {
            for event in &self.alphabet {
                if let Some(t) = self.transitions.get(&(state.clone(), event.clone())) {
                    out.push_str(&format!(
                        "{} --{}--> {} / {}\n",
                        state,
                        event,
                        t.next,
                        t.outputs.join(", ")
                    ));
                }
            }
        }
        out
    }
}

impl fmt::Display for EnforcementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Verdict of checking a finite trace against a policy monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyVerdict {
    Satisfied,
    /// The monitor first entered a violating state while consuming the event
    /// at this index.
    Violated {
        index: usize,
    },
}

/// Total safety automaton; violating states are traps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyMonitor {
    pub states: Vec<StateId>,
    pub initial: StateId,
    pub alphabet: Vec<EventName>,
    pub step: BTreeMap<(StateId, EventName), StateId>,
    pub violating: BTreeSet<StateId>,
}

impl PolicyMonitor {
    /// Parses and validates a policy monitor file.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let raw = RawAutomaton::parse(text, OutputLists::Forbidden)?;
        let violating: BTreeSet<StateId> = match raw.violating_decl {
            Some((_, names)) => names.into_iter().collect(),
            None => BTreeSet::new(),
        };
        let mut step = BTreeMap::new();
        for t in &raw.transitions {
            let key = (t.from.clone(), t.event.clone());
            if step.insert(key, t.to.clone()).is_some() {
                return Err(ModelError::Nondeterminism {
                    line: t.line,
                    state: t.from.clone(),
                    event: t.event.clone(),
                });
            }
        }
        let monitor = PolicyMonitor {
            states: raw.states,
            initial: raw.initial,
            alphabet: raw.alphabet,
            step,
            violating,
        };
        monitor.validate()?;
        Ok(monitor)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let states: BTreeSet<&StateId> = self.states.iter().collect();
        if !states.contains(&self.initial) {
            return Err(ModelError::UnknownState(self.initial.clone()));
        }
        for v in &self.violating {
            if !states.contains(v) {
                return Err(ModelError::UnknownState(v.clone()));
            }
        }
        if self.violating.contains(&self.initial) {
            return Err(ModelError::InitialViolating);
        }
        for ((from, event), to) in &self.step {
            if !states.contains(from) {
                return Err(ModelError::UnknownState(from.clone()));
            }
            if !states.contains(to) {
                return Err(ModelError::UnknownState(to.clone()));
            }
            if !self.alphabet.iter().any(|e| e == event) {
                return Err(ModelError::UnknownEvent(event.clone()));
            }
        }
        for state in &self.states {
            for event in &self.alphabet {
                match self.step.get(&(state.clone(), event.clone())) {
                    None => {
                        return Err(ModelError::MonitorNotTotal {
                            state: state.clone(),
                            event: event.clone(),
                        })
                    }
                    Some(to) => {
                        if self.violating.contains(state) && !self.violating.contains(to) {
                            return Err(ModelError::ViolatingEscape {
                                state: state.clone(),
                                event: event.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluates a finite trace; returns the index of the first violating
    /// entry, if any.
    pub fn check(&self, trace: &[EventName]) -> Result<PolicyVerdict, ModelError> {
        let mut state = self.initial.clone();
        for (index, event) in trace.iter().enumerate() {
            if !self.alphabet.iter().any(|e| e == event) {
                return Err(ModelError::UnknownEvent(event.clone()));
            }
            state = self.step[&(state, event.clone())].clone();
            if self.violating.contains(&state) {
                return Ok(PolicyVerdict::Violated { index });
            }
        }
        Ok(PolicyVerdict::Satisfied)
    }

    /// Canonical text form; parsing it back yields an identical monitor.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("alphabet: {}\n", self.alphabet.join(", ")));
        out.push_str(&format!("states: {}\n", self.states.join(", ")));
        out.push_str(&format!("initial: {}\n", self.initial));
        let violating: Vec<&str> = self.violating.iter().map(String::as_str).collect();
        out.push_str(&format!("violating: {}\n", violating.join(", ")));
        for state in &self.states {
            for event in &self.alphabet {
                if let Some(to) = self.step.get(&(state.clone(), event.clone())) {
                    out.push_str(&format!("{} --{}--> {}\n", state, event, to));
                }
            }
        }
        out
    }
}

/// Whether transition lines must or must not carry `/ output` lists.
#[derive(Clone, Copy, PartialEq)]
enum OutputLists {
    Required,
    Forbidden,
}

struct RawTransition {
    line: usize,
    from: StateId,
    event: EventName,
    to: StateId,
    outputs: Vec<EventName>,
}

struct RawAutomaton {
    alphabet: Vec<EventName>,
    states: Vec<StateId>,
    initial: StateId,
    violating_decl: Option<(usize, Vec<StateId>)>,
    transitions: Vec<RawTransition>,
}

impl RawAutomaton {
    fn parse(text: &str, outputs: OutputLists) -> Result<Self, ModelError> {
        let mut alphabet = None;
        let mut states = None;
        let mut initial = None;
        let mut violating_decl = None;
        let mut transitions = Vec::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.contains("--") {
                transitions.push(parse_transition(line_no, line, outputs)?);
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| ModelError::Syntax {
                line: line_no,
                message: format!("expected `key: value` or a transition, got `{line}`"),
            })?;
            let names = split_names(line_no, value)?;
            match key.trim() {
                "alphabet" => set_once(&mut alphabet, names, line_no, "alphabet")?,
                "states" => set_once(&mut states, names, line_no, "states")?,
                "initial" => {
                    if names.len() != 1 {
                        return Err(ModelError::Syntax {
                            line: line_no,
                            message: "`initial:` takes exactly one state".into(),
                        });
                    }
                    set_once(
                        &mut initial,
                        names.into_iter().next().unwrap(),
                        line_no,
                        "initial",
                    )?;
                }
                "violating" => {
                    if violating_decl.is_some() {
                        return Err(ModelError::Syntax {
                            line: line_no,
                            message: "duplicate `violating:` declaration".into(),
                        });
                    }
                    violating_decl = Some((line_no, names));
                }
                other => {
                    return Err(ModelError::Syntax {
                        line: line_no,
                        message: format!("unknown declaration `{other}:`"),
                    })
                }
            }
        }

        let missing = |what: &str| ModelError::Syntax {
            line: text.lines().count() + 1,
            message: format!("missing `{what}:` declaration"),
        };
        Ok(RawAutomaton {
            alphabet: alphabet.ok_or_else(|| missing("alphabet"))?,
            states: states.ok_or_else(|| missing("states"))?,
            initial: initial.ok_or_else(|| missing("initial"))?,
            violating_decl,
            transitions,
        })
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, line: usize, what: &str) -> Result<(), ModelError> {
    if slot.is_some() {
        return Err(ModelError::Syntax {
            line,
            message: format!("duplicate `{what}:` declaration"),
        });
    }
    *slot = Some(value);
    Ok(())
}

fn split_names(line: usize, value: &str) -> Result<Vec<String>, ModelError> {
    let value = value.trim();
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|name| {
            let name = name.trim();
            if name.is_empty() {
                Err(ModelError::Syntax {
                    line,
                    message: "empty name in list".into(),
                })
            } else {
                Ok(name.to_string())
            }
        })
        .collect()
}

fn parse_transition(
    line: usize,
    text: &str,
    outputs: OutputLists,
) -> Result<RawTransition, ModelError> {
    let syntax = |message: &str| ModelError::Syntax {
        line,
        message: message.into(),
    };
    let (from, rest) = text
        .split_once("--")
        .ok_or_else(|| syntax("expected `from --event--> to`"))?;
    let (event, rest) = rest
        .split_once("-->")
        .ok_or_else(|| syntax("expected `-->` after the event name"))?;
    let from = from.trim();
    let event = event.trim();
    let (to, output_list) = match rest.split_once('/') {
        Some((to, list)) => {
            if outputs == OutputLists::Forbidden {
                return Err(syntax("monitor transitions do not carry output lists"));
            }
            (to.trim(), Some(list))
        }
        None => {
            if outputs == OutputLists::Required {
                return Err(syntax(
                    "model transitions require `/ output, ...` (may be empty)",
                ));
            }
            (rest.trim(), None)
        }
    };
    if from.is_empty() || event.is_empty() || to.is_empty() {
        return Err(syntax("empty state or event name"));
    }
    let outputs = match output_list {
        Some(list) => split_names(line, list)?,
        None => Vec::new(),
    };
    Ok(RawTransition {
        line,
        from: from.to_string(),
        event: event.to_string(),
        to: to.to_string(),
        outputs,
    })
}
