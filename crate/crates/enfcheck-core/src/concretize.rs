//! Mapping abstract test sequences to executable UI-action tests.
//!
//! For each target sequence the concretizer enumerates the k shortest action
//! paths through the ripped GUI model whose concatenated annotations cover
//! the target (substring containment, checked by a failure-function
//! matcher), then validates candidates one by one by replaying them on the
//! bare app. The first candidate whose replayed, alphabet-filtered `req`
//! trace still covers the target becomes the concrete test; it carries a
//! differential oracle derived from the enforcement model.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::appsim::{Driver, UiAction};
use crate::hsi::{HsiSuite, InputSequence};
use crate::model::{EnforcementModel, EventName, ModelError};
use crate::ripper::{AugmentedGuiModel, GuiEdge};

/// Substring automaton for one target sequence.
///
/// States `0..=len` count matched events; state `len` accepts and absorbs
/// (once the target occurred, it stays occurred). Non-accepting states step
/// through the standard failure function.
#[derive(Debug, Clone)]
pub struct SubstringMatcher {
    target: Vec<EventName>,
    failure: Vec<usize>,
}

impl SubstringMatcher {
    pub fn new(target: &[EventName]) -> Self {
        let mut failure = vec![0usize; target.len()];
        let mut k = 0;
        for i in 1..target.len() {
            while k > 0 && target[i] != target[k] {
                k = failure[k - 1];
            }
            if target[i] == target[k] {
                k += 1;
            }
            failure[i] = k;
        }
        SubstringMatcher {
            target: target.to_vec(),
            failure,
        }
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn state_count(&self) -> usize {
        self.target.len() + 1
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        state == self.target.len()
    }

    pub fn step(&self, state: usize, event: &str) -> usize {
        if self.is_accepting(state) {
            return state;
        }
        let mut q = state;
        loop {
            if self.target[q] == event {
                return q + 1;
            }
            if q == 0 {
                return 0;
            }
            q = self.failure[q - 1];
        }
    }

    /// Steps through a whole stream; `true` when the target occurs in it.
    pub fn matches<'a>(&self, stream: impl IntoIterator<Item = &'a EventName>) -> bool {
        let mut state = self.start();
        if self.is_accepting(state) {
            return true;
        }
        for event in stream {
            state = self.step(state, event);
            if self.is_accepting(state) {
                return true;
            }
        }
        false
    }
}

/// Which differential oracle a test carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// The enforcer must not change anything; both executions must agree.
    Transparent,
    /// The enforcer must intervene: executions agree up to the divergence
    /// point and the enforcer side must equal the model-predicted outputs.
    Actual,
}

/// Differential oracle attached to a concrete test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Index into the target of the first edited input (actual only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_index: Option<usize>,
    /// Model-predicted output trace for the target (actual only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_api_outputs: Option<Vec<EventName>>,
}

/// An executable UI-action test covering one abstract sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteTest {
    pub target: InputSequence,
    pub actions: Vec<UiAction>,
    pub oracle: OracleSpec,
    /// 1-based rank of the candidate that survived validation.
    pub candidate_rank: usize,
}

/// A sequence for which no candidate validated, with per-candidate notes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncoverableSequence {
    pub sequence: InputSequence,
    pub candidates_tried: usize,
    pub diagnostics: Vec<String>,
}

/// Output of [`concretize_suite`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcretizeOutcome {
    pub tests: Vec<ConcreteTest>,
    pub uncoverable: Vec<UncoverableSequence>,
}

/// How a replayed trace must relate to the target to count as covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Target must occur as a contiguous substring of the filtered trace.
    Substring,
    /// The filtered trace must equal the target exactly.
    WholeTrace,
}

/// Options for concretization.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcretizeOptions {
    /// Number of candidate paths per sequence.
    pub k: usize,
    pub match_mode: MatchMode,
}

impl Default for ConcretizeOptions {
    fn default() -> Self {
        ConcretizeOptions {
            k: 10,
            match_mode: MatchMode::Substring,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConcretizeError {
    #[error("k must be at least 1")]
    BadK,
    #[error("target sequence is not defined from the model's initial state: {0}")]
    UndefinedSequence(ModelError),
}

/// Assigns the differential oracle for a target sequence: transparent when
/// the model echoes it, actual (with divergence index and the full predicted
/// output trace) otherwise.
pub fn assign_oracle(
    model: &EnforcementModel,
    target: &InputSequence,
) -> Result<OracleSpec, ConcretizeError> {
    let run = model
        .run_trace(target.events())
        .map_err(ConcretizeError::UndefinedSequence)?;
    Ok(match run.divergence {
        None => OracleSpec {
            kind: OracleKind::Transparent,
            divergence_index: None,
            expected_api_outputs: None,
        },
        Some(index) => OracleSpec {
            kind: OracleKind::Actual,
            divergence_index: Some(index),
            expected_api_outputs: Some(run.outputs),
        },
    })
}

/// Enumerates up to `k` distinct action paths from the initial node whose
/// concatenated edge annotations drive the matcher to acceptance, ordered by
/// (action count, lexicographic action encoding).
///
/// Enumeration is iterative deepening over the product of GUI nodes and
/// matcher states; within one depth round paths are simple in the product
/// graph, which bounds the search while still permitting GUI loops that
/// advance the matcher.
pub fn k_shortest_covering_paths(
    gui: &AugmentedGuiModel,
    target: &InputSequence,
    k: usize,
) -> Vec<Vec<UiAction>> {
    if k == 0 {
        return Vec::new();
    }
    let matcher = SubstringMatcher::new(target.events());
    let mut adjacency: std::collections::BTreeMap<&str, Vec<&GuiEdge>> = Default::default();
    for edge in &gui.edges {
        adjacency.entry(edge.from.as_str()).or_default().push(edge);
    }
    for edges in adjacency.values_mut() {
        edges.sort_by(|a, b| {
            a.action
                .encode()
                .cmp(&b.action.encode())
                .then_with(|| a.to.cmp(&b.to))
        });
    }

    let max_depth = gui.nodes.len() * matcher.state_count();
    let mut found: Vec<Vec<UiAction>> = Vec::new();
    for depth in 0..=max_depth {
        let mut visited = BTreeSet::new();
        let start = (gui.initial.as_str(), matcher.start());
        visited.insert(start);
        let mut path = Vec::new();
        enumerate(
            &adjacency,
            &matcher,
            start,
            depth,
            &mut path,
            &mut visited,
            &mut found,
            k,
        );
        if found.len() >= k {
            break;
        }
    }
    found
}

#[allow(clippy::too_many_arguments)]
fn enumerate<'a>(
    adjacency: &std::collections::BTreeMap<&'a str, Vec<&'a GuiEdge>>,
    matcher: &SubstringMatcher,
    node: (&'a str, usize),
    remaining: usize,
    path: &mut Vec<UiAction>,
    visited: &mut BTreeSet<(&'a str, usize)>,
    found: &mut Vec<Vec<UiAction>>,
    k: usize,
) {
    if found.len() >= k {
        return;
    }
    if remaining == 0 {
        if matcher.is_accepting(node.1) {
            found.push(path.clone());
        }
        return;
    }
    let Some(edges) = adjacency.get(node.0) else {
        return;
    };
    for edge in edges {
        let mut m = node.1;
        for event in &edge.annotation {
            m = matcher.step(m, event);
        }
        let next = (edge.to.as_str(), m);
        if !visited.insert(next) {
            continue;
        }
        path.push(edge.action.clone());
        enumerate(
            adjacency,
            matcher,
            next,
            remaining - 1,
            path,
            visited,
            found,
            k,
        );
        path.pop();
        visited.remove(&next);
        if found.len() >= k {
            return;
        }
    }
}

/// Concretizes a whole suite: per sequence, generate k candidates, validate
/// them sequentially on the bare driver, attach the oracle to the first one
/// that still covers the target when replayed; sequences with no surviving
/// candidate are reported as uncoverable.
pub fn concretize_suite<D: Driver + ?Sized>(
    gui: &AugmentedGuiModel,
    driver: &mut D,
    model: &EnforcementModel,
    suite: &HsiSuite,
    options: &ConcretizeOptions,
) -> Result<ConcretizeOutcome, ConcretizeError> {
    if options.k == 0 {
        return Err(ConcretizeError::BadK);
    }
    let alphabet: BTreeSet<&EventName> = model.alphabet.iter().collect();
    let mut tests = Vec::new();
    let mut uncoverable = Vec::new();
    for entry in &suite.sequences {
        let target = &entry.events;
        let oracle = assign_oracle(model, target)?;
        let candidates = k_shortest_covering_paths(gui, target, options.k);
        let mut diagnostics = Vec::new();
        let mut validated = None;
        for (i, actions) in candidates.iter().enumerate() {
            match replay_filtered(driver, actions, &alphabet) {
                Ok(trace) => {
                    if covers(&trace, target, options.match_mode) {
                        validated = Some((i + 1, actions.clone()));
                        break;
                    }
                    diagnostics.push(format!(
                        "candidate {} replayed to {:?}, which does not cover the target",
                        i + 1,
                        trace
                    ));
                }
                Err(message) => {
                    diagnostics.push(format!("candidate {}: {message}", i + 1));
                }
            }
        }
        match validated {
            Some((candidate_rank, actions)) => tests.push(ConcreteTest {
                target: target.clone(),
                actions,
                oracle,
                candidate_rank,
            }),
            None => uncoverable.push(UncoverableSequence {
                sequence: target.clone(),
                candidates_tried: candidates.len(),
                diagnostics,
            }),
        }
    }
    Ok(ConcretizeOutcome { tests, uncoverable })
}

fn covers(trace: &[EventName], target: &InputSequence, mode: MatchMode) -> bool {
    match mode {
        MatchMode::Substring => SubstringMatcher::new(target.events()).matches(trace.iter()),
        MatchMode::WholeTrace => trace == target.events(),
    }
}

fn replay_filtered<D: Driver + ?Sized>(
    driver: &mut D,
    actions: &[UiAction],
    alphabet: &BTreeSet<&EventName>,
) -> Result<Vec<EventName>, String> {
    driver.reset();
    let mut trace = Vec::new();
    for action in actions {
        let (_, emitted, _) = driver.perform(action).map_err(|e| e.to_string())?;
        trace.extend(emitted.into_iter().filter(|e| alphabet.contains(e)));
    }
    Ok(trace)
}

/// Serializes a test suite as a JSON array.
pub fn tests_to_json(tests: &[ConcreteTest]) -> String {
    let mut text = serde_json::to_string_pretty(tests).expect("tests serialize");
    text.push('\n');
    text
}

pub fn tests_from_json(text: &str) -> Result<Vec<ConcreteTest>, serde_json::Error> {
    serde_json::from_str(text)
}
