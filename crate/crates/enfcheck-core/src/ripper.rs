//! Breadth-first GUI exploration with event tracing.
//!
//! Explores an app through the [`Driver`] contract, executing every
//! available action of every discovered state exactly once, and returns a
//! graph whose edges are annotated with the alphabet events emitted during
//! the transition. Frontier states are reached by reset-and-replay of the
//! recorded access path, which is sound because drivers are deterministic;
//! a replay that lands elsewhere aborts the rip with a diagnostic.
//!
//! Ripping runs on the bare app, without any enforcer deployed, so the
//! annotations record `req` events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::appsim::{Driver, DriverError, UiAction, View};
use crate::model::EventName;

/// A GUI-state signature (hex digest of the view set).
pub type Signature = String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RipError {
    #[error("action budget must be at least 1")]
    BadBudget,
    #[error("driver error: {0}")]
    Driver(#[from] DriverError),
    #[error("nondeterministic driver: replaying {path:?} reached `{got}` instead of `{expected}`")]
    NondeterministicDriver {
        path: Vec<String>,
        expected: Signature,
        got: Signature,
    },
    #[error("malformed GUI-model file: {0}")]
    Malformed(String),
}

/// One discovered GUI state with a representative view set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiNode {
    pub signature: Signature,
    pub views: Vec<View>,
}

/// One executed (state, action) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiEdge {
    pub from: Signature,
    pub action: UiAction,
    pub to: Signature,
    /// Emitted events filtered to the tracing alphabet, in emission order.
    pub annotation: Vec<EventName>,
}

/// The ripped graph plus the access path used to reach each node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedGuiModel {
    /// Nodes sorted by signature.
    pub nodes: Vec<GuiNode>,
    /// Signature of the post-reset state.
    pub initial: Signature,
    /// Edges in discovery order.
    pub edges: Vec<GuiEdge>,
    /// Access path per node, recorded during exploration.
    pub log: BTreeMap<Signature, Vec<UiAction>>,
}

impl AugmentedGuiModel {
    pub fn node(&self, signature: &str) -> Option<&GuiNode> {
        self.nodes.iter().find(|n| n.signature == signature)
    }

    pub fn edges_from<'a>(&'a self, signature: &'a str) -> impl Iterator<Item = &'a GuiEdge> {
        self.edges.iter().filter(move |e| e.from == signature)
    }

    fn validate(&self) -> Result<(), RipError> {
        let signatures: BTreeSet<&Signature> = self.nodes.iter().map(|n| &n.signature).collect();
        if !signatures.contains(&self.initial) {
            return Err(RipError::Malformed(format!(
                "initial signature `{}` is not a node",
                self.initial
            )));
        }
        for edge in &self.edges {
            for endpoint in [&edge.from, &edge.to] {
                if !signatures.contains(endpoint) {
                    return Err(RipError::Malformed(format!(
                        "edge endpoint `{endpoint}` is not a node"
                    )));
                }
            }
        }
        for key in self.log.keys() {
            if !signatures.contains(key) {
                return Err(RipError::Malformed(format!(
                    "log entry `{key}` is not a node"
                )));
            }
        }
        Ok(())
    }
}

fn replay_to<D: Driver + ?Sized>(
    driver: &mut D,
    path: &[UiAction],
    expected: &Signature,
) -> Result<(), RipError> {
    let (mut state, _, _) = driver.reset();
    for action in path {
        let (next, _, _) = driver.perform(action)?;
        state = next;
    }
    if &state.signature != expected {
        return Err(RipError::NondeterministicDriver {
            path: path.iter().map(UiAction::encode).collect(),
            expected: expected.clone(),
            got: state.signature,
        });
    }
    Ok(())
}

/// Explores the app breadth-first and returns the annotated graph.
///
/// States are queued in discovery order; every available action of a
/// dequeued state is executed once; duplicate states (equal signatures)
/// merge, keeping the first access path. `budget` bounds the number of
/// explored (state, action) executions; replay navigation is not counted.
pub fn rip<D: Driver + ?Sized>(
    driver: &mut D,
    alphabet: &BTreeSet<EventName>,
    budget: usize,
) -> Result<AugmentedGuiModel, RipError> {
    if budget == 0 {
        return Err(RipError::BadBudget);
    }
    let (initial_state, _, _) = driver.reset();
    let initial = initial_state.signature.clone();

    let mut views: BTreeMap<Signature, Vec<View>> = BTreeMap::new();
    let mut log: BTreeMap<Signature, Vec<UiAction>> = BTreeMap::new();
    let mut queue: VecDeque<Signature> = VecDeque::new();
    let mut edges: Vec<GuiEdge> = Vec::new();
    let mut executed = 0usize;

    views.insert(initial.clone(), initial_state.views.clone());
    log.insert(initial.clone(), Vec::new());
    queue.push_back(initial.clone());

    'explore: while let Some(signature) = queue.pop_front() {
        let path = log[&signature].clone();
        replay_to(driver, &path, &signature)?;
        let here = crate::appsim::GuiState {
            views: views[&signature].clone(),
            signature: signature.clone(),
        };
        let actions = driver.available_actions(&here)?;
        for (i, action) in actions.iter().enumerate() {
            if executed == budget {
                break 'explore;
            }
            if i > 0 {
                replay_to(driver, &path, &signature)?;
            }
            let (next, emitted, _) = driver.perform(action)?;
            executed += 1;
            let annotation: Vec<EventName> = emitted
                .into_iter()
                .filter(|e| alphabet.contains(e))
                .collect();
            edges.push(GuiEdge {
                from: signature.clone(),
                action: action.clone(),
                to: next.signature.clone(),
                annotation,
            });
            if !views.contains_key(&next.signature) {
                let mut access = path.clone();
                access.push(action.clone());
                views.insert(next.signature.clone(), next.views.clone());
                log.insert(next.signature.clone(), access);
                queue.push_back(next.signature.clone());
            }
        }
    }

    let nodes = views
        .into_iter()
        .map(|(signature, views)| GuiNode { signature, views })
        .collect();
    Ok(AugmentedGuiModel {
        nodes,
        initial,
        edges,
        log,
    })
}

/// Serializes a GUI model; the output is canonical (sorted nodes and log,
/// discovery-ordered edges, fixed field order).
pub fn export_gui_model(model: &AugmentedGuiModel) -> String {
    let mut text = serde_json::to_string_pretty(model).expect("GUI model serializes");
    text.push('\n');
    text
}

/// Parses a GUI-model file and checks its structure.
pub fn import_gui_model(text: &str) -> Result<AugmentedGuiModel, RipError> {
    let model: AugmentedGuiModel =
        serde_json::from_str(text).map_err(|e| RipError::Malformed(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appsim::{CostVector, GuiState, SimDriver};
    use crate::fixtures;

    fn camera_alphabet() -> BTreeSet<EventName> {
        fixtures::camera_model().alphabet.into_iter().collect()
    }

    fn rip_compliant() -> AugmentedGuiModel {
        let mut driver = fixtures::compliant_driver();
        rip(&mut driver, &camera_alphabet(), 10_000).unwrap()
    }

    #[test]
    fn rips_four_nodes_with_annotated_back_edge() {
        let model = rip_compliant();
        assert_eq!(model.nodes.len(), 4);
        assert_eq!(model.edges.len(), 8);
        let back = model
            .edges
            .iter()
            .find(|e| e.action == UiAction::key_event("Back") && e.annotation.len() == 2)
            .expect("Back edge out of the main screen");
        assert_eq!(back.annotation, vec!["camera.release", "activity.onPause"]);
    }

    #[test]
    fn empty_alphabet_yields_same_graph_with_empty_annotations() {
        let mut driver = fixtures::compliant_driver();
        let plain = rip(&mut driver, &BTreeSet::new(), 10_000).unwrap();
        let traced = rip_compliant();
        assert_eq!(plain.nodes, traced.nodes);
        assert_eq!(plain.edges.len(), traced.edges.len());
        assert!(plain.edges.iter().all(|e| e.annotation.is_empty()));
    }

    #[test]
    fn foreign_events_never_reach_annotations() {
        let model = rip_compliant();
        for edge in &model.edges {
            assert!(!edge.annotation.iter().any(|e| e == "app.shot"));
        }
    }

    #[test]
    fn budget_bounds_exploration() {
        let mut driver = fixtures::compliant_driver();
        let model = rip(&mut driver, &camera_alphabet(), 1).unwrap();
        assert_eq!(model.nodes.len(), 2);
        assert_eq!(model.edges.len(), 1);

        assert!(matches!(
            rip(&mut driver, &camera_alphabet(), 0),
            Err(RipError::BadBudget)
        ));
    }

    #[test]
    fn ripping_is_deterministic() {
        let mut a = fixtures::compliant_driver();
        let mut b = fixtures::compliant_driver();
        let alphabet = camera_alphabet();
        assert_eq!(
            rip(&mut a, &alphabet, 10_000).unwrap(),
            rip(&mut b, &alphabet, 10_000).unwrap()
        );
    }

    /// Under an ample budget the ripped graph is isomorphic to the reachable
    /// part of the app spec's transition graph.
    #[test]
    fn ample_budget_recovers_the_spec_graph() {
        let spec = fixtures::foocam_compliant();
        let model = rip_compliant();
        assert_eq!(model.nodes.len(), spec.states.len());
        assert_eq!(model.edges.len(), spec.transitions.len());
        let alphabet = camera_alphabet();
        for t in &spec.transitions {
            let matching = model
                .edges
                .iter()
                .filter(|e| e.action == t.action)
                .filter(|e| {
                    e.annotation
                        == t.emits
                            .iter()
                            .filter(|ev| alphabet.contains(*ev))
                            .cloned()
                            .collect::<Vec<_>>()
                })
                .count();
            assert!(
                matching >= 1,
                "no ripped edge for {} from {}",
                t.action,
                t.from
            );
        }
    }

    /// Replaying the access path of any edge and performing its action
    /// reproduces the recorded destination and annotation.
    #[test]
    fn edges_are_sound_under_replay() {
        let model = rip_compliant();
        let alphabet = camera_alphabet();
        let mut driver = fixtures::compliant_driver();
        for edge in &model.edges {
            replay_to(&mut driver, &model.log[&edge.from], &edge.from).unwrap();
            let (next, emitted, _) = driver.perform(&edge.action).unwrap();
            assert_eq!(next.signature, edge.to);
            let filtered: Vec<EventName> = emitted
                .into_iter()
                .filter(|e| alphabet.contains(e))
                .collect();
            assert_eq!(filtered, edge.annotation);
        }
    }

    #[test]
    fn export_import_round_trip() {
        let model = rip_compliant();
        let text = export_gui_model(&model);
        let back = import_gui_model(&text).unwrap();
        assert_eq!(model, back);

        let empty_edges = AugmentedGuiModel {
            nodes: vec![GuiNode {
                signature: "sig".into(),
                views: vec![],
            }],
            initial: "sig".into(),
            edges: vec![],
            log: BTreeMap::from([("sig".to_string(), vec![])]),
        };
        let back = import_gui_model(&export_gui_model(&empty_edges)).unwrap();
        assert_eq!(empty_edges, back);
    }

    #[test]
    fn import_rejects_truncated_and_inconsistent_files() {
        let text = export_gui_model(&rip_compliant());
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            import_gui_model(truncated),
            Err(RipError::Malformed(_))
        ));

        let dangling = AugmentedGuiModel {
            nodes: vec![GuiNode {
                signature: "a".into(),
                views: vec![],
            }],
            initial: "a".into(),
            edges: vec![GuiEdge {
                from: "a".into(),
                action: UiAction::key_event("Back"),
                to: "ghost".into(),
                annotation: vec![],
            }],
            log: BTreeMap::new(),
        };
        assert!(matches!(
            import_gui_model(&export_gui_model(&dangling)),
            Err(RipError::Malformed(_))
        ));
    }

    /// A driver that changes behavior between replays; the rip must abort
    /// with a diagnostic instead of recording garbage.
    struct FlakyDriver {
        inner: SimDriver,
        resets: usize,
    }

    impl Driver for FlakyDriver {
        fn reset(&mut self) -> (GuiState, u64, CostVector) {
            self.resets += 1;
            let (state, launch, cost) = self.inner.reset();
            if self.resets > 2 {
                // Pretend the app relaunched into a different screen.
                self.inner
                    .perform(&UiAction::touch("Allow"))
                    .map(|(s, _, _)| (s, launch, cost.clone()))
                    .unwrap_or((state, launch, cost))
            } else {
                (state, launch, cost)
            }
        }

        fn available_actions(&self, state: &GuiState) -> Result<Vec<UiAction>, DriverError> {
            self.inner.available_actions(state)
        }

        fn perform(
            &mut self,
            action: &UiAction,
        ) -> Result<(GuiState, Vec<EventName>, CostVector), DriverError> {
            self.inner.perform(action)
        }
    }

    #[test]
    fn nondeterministic_driver_aborts_with_diagnostic() {
        let mut driver = FlakyDriver {
            inner: fixtures::compliant_driver(),
            resets: 0,
        };
        let err = rip(&mut driver, &camera_alphabet(), 10_000).unwrap_err();
        assert!(
            matches!(
                err,
                RipError::NondeterministicDriver { .. } | RipError::Driver(_)
            ),
            "unexpected error: {err}"
        );
    }
}
