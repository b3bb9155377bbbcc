//! Abstract test-sequence generation for enforcement models.
//!
//! Builds a transition cover (every defined transition occurs as the last
//! element of some access sequence) and harmonized separating families (for
//! every distinguishable state pair a shared sequence whose outputs differ
//! from the two states), then concatenates cover members with the family of
//! the state each member reaches. The construction works on partially
//! specified machines: a separating suffix that is undefined from the
//! reached state is skipped rather than truncated.
//!
//! All tie-breaks use alphabet declaration order, then shorter-first, so two
//! invocations on the same model produce identical suites.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EnforcementModel, EventName, ModelError, StateId};

/// An input sequence over a model's alphabet (possibly empty).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputSequence(pub Vec<EventName>);

impl InputSequence {
    pub fn empty() -> Self {
        InputSequence(Vec::new())
    }

    pub fn events(&self) -> &[EventName] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when `self` is a proper prefix of `other`.
    pub fn is_proper_prefix_of(&self, other: &InputSequence) -> bool {
        self.0.len() < other.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    fn concat(&self, suffix: &InputSequence) -> InputSequence {
        let mut events = self.0.clone();
        events.extend(suffix.0.iter().cloned());
        InputSequence(events)
    }
}

impl fmt::Display for InputSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("ε")
        } else {
            f.write_str(&self.0.join(" "))
        }
    }
}

impl From<Vec<&str>> for InputSequence {
    fn from(events: Vec<&str>) -> Self {
        InputSequence(events.into_iter().map(str::to_string).collect())
    }
}

/// Compares sequences by length, then element-wise by alphabet declaration
/// order. Events share the declared alphabet, so indices always exist for
/// sequences produced by this module.
fn canonical_cmp(
    model: &EnforcementModel,
    a: &InputSequence,
    b: &InputSequence,
) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let key = |seq: &InputSequence| -> Vec<usize> {
            seq.0
                .iter()
                .map(|e| model.event_index(e).unwrap_or(usize::MAX))
                .collect()
        };
        key(a).cmp(&key(b))
    })
}

/// Per-state separating families plus diagnostics about state pairs that no
/// sequence can tell apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatingFamilies {
    /// For each state, the sequences distinguishing it from the other
    /// states. Pairwise separators are inserted into both endpoint families,
    /// which is what harmonizes them.
    pub families: BTreeMap<StateId, Vec<InputSequence>>,
    /// The designated separator for each distinguishable pair; it is a
    /// member of both endpoint families and yields different outputs when
    /// run from the two states.
    pub pair_separators: BTreeMap<(StateId, StateId), InputSequence>,
    /// State pairs that are output-equivalent on every commonly defined
    /// sequence within the search bound.
    pub indistinguishable: Vec<(StateId, StateId)>,
}

/// Provenance of one suite sequence: the transition-cover prefix and the
/// separating suffix it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub prefix: InputSequence,
    pub suffix: InputSequence,
}

/// One generated test sequence with every (prefix, suffix) combination that
/// produced it; combinations collapsing to the same sequence are merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub events: InputSequence,
    pub provenance: Vec<Provenance>,
}

/// The generated suite, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HsiSuite {
    pub sequences: Vec<SuiteEntry>,
}

impl HsiSuite {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn inputs(&self) -> Vec<&InputSequence> {
        self.sequences.iter().map(|s| &s.events).collect()
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("suite serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Shortest defined access sequence for every state; the initial state maps
/// to the empty sequence. Ties are broken by alphabet declaration order.
pub fn state_cover(model: &EnforcementModel) -> BTreeMap<StateId, InputSequence> {
    let mut cover = BTreeMap::new();
    cover.insert(model.initial.clone(), InputSequence::empty());
    let mut queue = VecDeque::from([model.initial.clone()]);
    while let Some(state) = queue.pop_front() {
        let access = cover[&state].clone();
        for event in &model.alphabet {
            if let Some(t) = model.transitions.get(&(state.clone(), event.clone())) {
                if !cover.contains_key(&t.next) {
                    let mut path = access.clone();
                    path.0.push(event.clone());
                    cover.insert(t.next.clone(), path);
                    queue.push_back(t.next.clone());
                }
            }
        }
    }
    cover
}

/// `{ε} ∪ { access(s)·a : transition (s, a) defined }`, in canonical order.
/// Every defined transition occurs as the last element of some member.
pub fn transition_cover(model: &EnforcementModel) -> Vec<InputSequence> {
    let access = state_cover(model);
    let mut cover = BTreeSet::new();
    cover.insert(InputSequence::empty());
    for state in &model.states {
        for event in &model.alphabet {
            if model
                .transitions
                .contains_key(&(state.clone(), event.clone()))
            {
                let mut seq = access[state].clone();
                seq.0.push(event.clone());
                cover.insert(seq);
            }
        }
    }
    let mut ordered: Vec<InputSequence> = cover.into_iter().collect();
    ordered.sort_by(|a, b| canonical_cmp(model, a, b));
    ordered
}

/// Shortest input sequence defined from both states whose produced outputs
/// differ; `None` when the states are output-equivalent on all commonly
/// defined sequences within the `|states|²` depth bound.
///
/// Breadth-first search over state pairs: along a path whose accumulated
/// outputs are still equal, the cumulative outputs first differ exactly when
/// one step's emission lists differ, so each explored pair node only needs
/// the pair itself.
pub fn separating_sequence(
    model: &EnforcementModel,
    si: &str,
    sj: &str,
) -> Result<Option<InputSequence>, ModelError> {
    if si == sj {
        return Err(ModelError::Usage(format!(
            "separating sequences require distinct states, got `{si}` twice"
        )));
    }
    for state in [si, sj] {
        if !model.states.iter().any(|s| s == state) {
            return Err(ModelError::UnknownState(state.to_string()));
        }
    }
    let bound = model.states.len() * model.states.len();
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<(StateId, StateId, InputSequence)> = VecDeque::new();
    seen.insert((si.to_string(), sj.to_string()));
    queue.push_back((si.to_string(), sj.to_string(), InputSequence::empty()));
    while let Some((a, b, path)) = queue.pop_front() {
        if path.len() >= bound {
            continue;
        }
        for event in &model.alphabet {
            let ta = model.transitions.get(&(a.clone(), event.clone()));
            let tb = model.transitions.get(&(b.clone(), event.clone()));
            let (Some(ta), Some(tb)) = (ta, tb) else {
                continue;
            };
            let mut candidate = path.clone();
            candidate.0.push(event.clone());
            if ta.outputs != tb.outputs {
                return Ok(Some(candidate));
            }
            let pair = (ta.next.clone(), tb.next.clone());
            if pair.0 != pair.1 && seen.insert(pair.clone()) {
                queue.push_back((pair.0, pair.1, candidate));
            }
        }
    }
    Ok(None)
}

/// Builds the harmonized families: each pairwise separator is inserted into
/// both endpoint families.
pub fn separating_families(model: &EnforcementModel) -> SeparatingFamilies {
    let mut families: BTreeMap<StateId, BTreeSet<InputSequence>> = model
        .states
        .iter()
        .map(|s| (s.clone(), BTreeSet::new()))
        .collect();
    let mut pair_separators = BTreeMap::new();
    let mut indistinguishable = Vec::new();
    for (i, si) in model.states.iter().enumerate() {
        for sj in model.states.iter().skip(i + 1) {
            match separating_sequence(model, si, sj).expect("states come from the model") {
                Some(sep) => {
                    families.get_mut(si).unwrap().insert(sep.clone());
                    families.get_mut(sj).unwrap().insert(sep.clone());
                    pair_separators.insert((si.clone(), sj.clone()), sep);
                }
                None => indistinguishable.push((si.clone(), sj.clone())),
            }
        }
    }
    let families = families
        .into_iter()
        .map(|(state, set)| {
            let mut seqs: Vec<InputSequence> = set.into_iter().collect();
            seqs.sort_by(|a, b| canonical_cmp(model, a, b));
            (state, seqs)
        })
        .collect();
    SeparatingFamilies {
        families,
        pair_separators,
        indistinguishable,
    }
}

/// Removes every sequence that is a proper prefix of another member; the
/// result is prefix-free.
pub fn dedup_prefixes(sequences: &BTreeSet<InputSequence>) -> BTreeSet<InputSequence> {
    sequences
        .iter()
        .filter(|seq| !sequences.iter().any(|other| seq.is_proper_prefix_of(other)))
        .cloned()
        .collect()
}

/// Generates the suite: each transition-cover member is concatenated with
/// every separating suffix of the state it reaches that is defined from that
/// state; a member with no usable suffix is emitted alone. The empty cover
/// member carries no transition and is dropped, and exact duplicates are
/// filtered out (first provenance wins). Every emitted sequence is fully
/// defined from the initial state.
pub fn generate_hsi_suite(model: &EnforcementModel) -> HsiSuite {
    let cover = transition_cover(model);
    let families = separating_families(model);
    let mut entries: BTreeMap<InputSequence, Vec<Provenance>> = BTreeMap::new();
    let mut emit = |events: InputSequence, prefix: &InputSequence, suffix: InputSequence| {
        entries.entry(events).or_default().push(Provenance {
            prefix: prefix.clone(),
            suffix,
        });
    };
    for prefix in &cover {
        let run = model
            .run_trace(prefix.events())
            .expect("transition cover members are defined from initial");
        let reached = run.final_state;
        let mut emitted_any = false;
        for suffix in &families.families[&reached] {
            if !model.is_defined_from(&reached, suffix.events()) {
                continue;
            }
            emitted_any = true;
            emit(prefix.concat(suffix), prefix, suffix.clone());
        }
        if !emitted_any && !prefix.is_empty() {
            emit(prefix.clone(), prefix, InputSequence::empty());
        }
    }
    // The empty cover member exercises no transition; drop it when no
    // separating suffix extended it.
    entries.remove(&InputSequence::empty());
    let mut sequences: Vec<SuiteEntry> = entries
        .into_iter()
        .map(|(events, provenance)| SuiteEntry { events, provenance })
        .collect();
    sequences.sort_by(|a, b| canonical_cmp(model, &a.events, &b.events));
    HsiSuite { sequences }
}
