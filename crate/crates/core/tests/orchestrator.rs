mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use icu_agents::agents::{build_few_shot, AgentName, ACTUAL_OUTCOME_LABEL};
use icu_agents::orchestrator::*;
use icu_agents::provider::{ErrorClass, FaultRule, MockProvider, Provider, RetryPolicy, ScriptedFaults};
use proptest::prelude::*;

fn mas() -> ValidatedGraph {
    ValidatedGraph::new(build_mas_graph()).unwrap()
}

fn sas() -> ValidatedGraph {
    ValidatedGraph::new(build_sas_graph()).unwrap()
}

fn mock(seed: u64) -> Arc<dyn Provider> {
    Arc::new(MockProvider::new(seed))
}

#[tokio::test]
async fn mas_end_to_end_with_mock() {
    let records = common::synth_records(11, 6);
    let exemplars = build_few_shot(&records).unwrap();
    let exec = Executor::new(mas(), mock(1)).with_exemplars(exemplars).with_policy(RetryPolicy::immediate(3));
    let rec = exec.execute(&records[0], 5).await;
    assert!(rec.is_success(), "{:?}", rec.failure);
    assert_eq!(rec.tasks.len(), 7);
    let p = rec.prediction.as_ref().unwrap();
    assert!((0.0..=1.0).contains(&p.mortality_probability));
    assert!(rec.transparency.as_ref().unwrap().overall > 0.0);
    let pred = rec.task(AgentName::Prediction).unwrap();
    assert!(pred.user_text.contains("=== EXEMPLAR 1: EXPIRED ==="));
    for t in &rec.tasks {
        assert_eq!(t.user_text.contains(ACTUAL_OUTCOME_LABEL), t.agent == AgentName::Validation, "{}", t.agent);
    }
    assert_eq!(RunRecord::from_json(&rec.to_json()).unwrap(), rec);
}

#[tokio::test]
async fn start_order_respects_dependencies() {
    let records = common::synth_records(12, 4);
    let graph = mas();
    let rec = Executor::new(graph.clone(), mock(2)).execute(&records[1], 1).await;
    for node in &graph.graph().nodes {
        let t = rec.task(node.id()).unwrap();
        for dep in &node.depends_on {
            let d = rec.task(*dep).unwrap();
            assert!(t.start_seq > d.end_seq, "{} started before {} ended", node.id(), dep);
            assert!(t.start_offset_ms >= d.end_offset_ms);
        }
    }
}

#[tokio::test]
async fn fatal_failure_at_integration_keeps_first_layer() {
    let records = common::synth_records(13, 4);
    let faults = Arc::new(ScriptedFaults::new(
        MockProvider::new(3),
        vec![FaultRule::always(AgentName::Integration, ErrorClass::Auth)],
    ));
    let dir = tempfile::tempdir().unwrap();
    let exec = Executor::new(mas(), faults.clone()).with_run_id("fixed").persist_to(dir.path());
    let rec = exec.execute_and_persist(&records[0], 1).await.unwrap();
    assert_eq!(rec.status, RunStatus::Failed);
    let agents: BTreeSet<AgentName> = rec.tasks.iter().map(|t| t.agent).collect();
    assert_eq!(
        agents,
        [AgentName::LabAnalysis, AgentName::VitalsAnalysis, AgentName::ContextAnalysis].into_iter().collect()
    );
    let f = rec.failure.as_ref().unwrap();
    assert_eq!((f.agent, f.error_class, f.attempts), (Some(AgentName::Integration), Some(ErrorClass::Auth), 1));
    let path = dir.path().join("fixed").join("MAS").join(format!("{}.json", rec.stay_id));
    let back = RunRecord::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back, rec);
}

#[tokio::test]
async fn transient_faults_are_retried() {
    let records = common::synth_records(14, 4);
    let faults = Arc::new(ScriptedFaults::new(
        MockProvider::new(3),
        vec![FaultRule::times(AgentName::Prediction, ErrorClass::RateLimit, 2)],
    ));
    let rec = Executor::new(mas(), faults.clone())
        .with_policy(RetryPolicy::immediate(3))
        .execute(&records[0], 1)
        .await;
    assert!(rec.is_success());
    assert_eq!(rec.task(AgentName::Prediction).unwrap().attempts, 3);
    assert_eq!(faults.injected(), 2);
}

#[tokio::test]
async fn unparseable_prediction_gets_one_reask() {
    struct Sloppy(MockProvider);
    #[async_trait::async_trait]
    impl Provider for Sloppy {
        fn name(&self) -> &str {
            "sloppy"
        }
        async fn complete(
            &self,
            r: &icu_agents::provider::ProviderRequest,
        ) -> Result<icu_agents::provider::ProviderResponse, icu_agents::provider::ProviderError> {
            let mut resp = self.0.complete(r).await?;
            if r.system_text.starts_with("AGENT: sas_all_in_one") && !r.user_text.contains("FORMAT REMINDER") {
                resp.text = "The patient is quite sick.".into();
            }
            Ok(resp)
        }
    }
    let records = common::synth_records(15, 4);
    let rec = Executor::new(sas(), Arc::new(Sloppy(MockProvider::new(1)))).execute(&records[0], 1).await;
    assert!(rec.is_success(), "{:?}", rec.failure);
    let t = &rec.tasks[0];
    assert_eq!((t.format_reasks, t.attempts), (1, 2));
    assert_eq!(t.rejected_response_text.as_deref(), Some("The patient is quite sick."));
}

#[tokio::test]
async fn same_inputs_same_record() {
    let records = common::synth_records(16, 4);
    let a = Executor::new(mas(), mock(4)).execute(&records[2], 9).await;
    let b = Executor::new(mas(), mock(4)).execute(&records[2], 9).await;
    assert_eq!(a.without_timing(), b.without_timing());
    let c = Executor::new(mas(), mock(5)).execute(&records[2], 9).await;
    assert_ne!(a.without_timing(), c.without_timing());
}

#[tokio::test]
async fn batch_of_twenty() {
    let records = common::synth_records(17, 20);
    let dir = tempfile::tempdir().unwrap();
    let exec = Executor::new(mas(), mock(1)).with_run_id("r1").persist_to(dir.path());
    let out = exec.run_batch(&records, 4, 3).await.unwrap();
    assert_eq!((out.summary.attempted, out.summary.succeeded, out.summary.failed), (20, 20, 0));
    assert!(out.summary.peak_in_flight <= 4);
    let run_dir = dir.path().join("r1").join("MAS");
    assert!(run_dir.join(SUMMARY_FILE).exists());
    assert_eq!(std::fs::read_dir(&run_dir).unwrap().count(), 21);
}

#[tokio::test]
async fn batch_isolates_one_failure() {
    let records = common::synth_records(18, 20);
    let victim = format!("Stay {}", records[7].stay_id);
    let faults = Arc::new(ScriptedFaults::new(
        MockProvider::new(1),
        vec![FaultRule::always(AgentName::ContextAnalysis, ErrorClass::ServerError).for_text(victim)],
    ));
    let out = Executor::new(mas(), faults)
        .with_policy(RetryPolicy::immediate(2))
        .run_batch(&records, 4, 3)
        .await
        .unwrap();
    assert_eq!((out.summary.succeeded, out.summary.failed), (19, 1));
    assert_eq!(out.summary.failures[0].stay_id, records[7].stay_id);
    assert_eq!(out.summary.failures[0].failure.attempts, 2);
}

#[tokio::test]
async fn parallelism_does_not_change_results() {
    let records = common::synth_records(19, 12);
    let exec = Executor::new(mas(), mock(6));
    let one = exec.run_batch(&records, 1, 2).await.unwrap();
    let four = exec.run_batch(&records, 4, 2).await.unwrap();
    assert_eq!(one.summary.peak_in_flight, 1);
    let strip = |o: &BatchOutcome| o.records.iter().map(RunRecord::without_timing).collect::<Vec<_>>();
    assert_eq!(strip(&one), strip(&four));
}

#[tokio::test]
async fn zero_parallelism_is_rejected() {
    let exec = Executor::new(sas(), mock(1));
    assert!(matches!(exec.run_batch(&[], 0, 1).await, Err(BatchError::Parallelism)));
}

fn random_dag() -> impl Strategy<Value = Vec<(u32, BTreeSet<u32>)>> {
    (1usize..24).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::vec(any::<prop::sample::Index>(), 0..4), n).prop_map(
            move |deps| {
                deps.into_iter()
                    .enumerate()
                    .map(|(i, picks)| {
                        let d: BTreeSet<u32> =
                            if i == 0 { BTreeSet::new() } else { picks.iter().map(|p| p.index(i) as u32).collect() };
                        (i as u32, d)
                    })
                    .collect()
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_dags_layer_correctly(nodes in random_dag()) {
        let layers = topological_layers(&nodes).unwrap();
        let mut level = std::collections::BTreeMap::new();
        for (k, layer) in layers.iter().enumerate() {
            for id in layer {
                level.insert(*id, k);
            }
        }
        prop_assert_eq!(level.len(), nodes.len());
        for (id, deps) in &nodes {
            for d in deps {
                prop_assert!(level[d] < level[id]);
            }
            // minimal layering: a node sits right after its deepest dependency
            let expect = deps.iter().map(|d| level[d] + 1).max().unwrap_or(0);
            prop_assert_eq!(level[id], expect);
        }
    }

    #[test]
    fn injected_back_edge_is_a_cycle(nodes in random_dag(), pick in any::<prop::sample::Index>()) {
        // pick any edge u <- v (v depends on u) and make u depend on v
        let edges: Vec<(u32, u32)> = nodes.iter().flat_map(|(v, ds)| ds.iter().map(move |u| (*u, *v))).collect();
        prop_assume!(!edges.is_empty());
        let (u, v) = edges[pick.index(edges.len())];
        let mut nodes = nodes;
        nodes[u as usize].1.insert(v);
        match topological_layers(&nodes) {
            Err(DagError::Cycle(cycle)) => {
                prop_assert!(cycle.len() >= 2);
                let deps: std::collections::BTreeMap<u32, &BTreeSet<u32>> = nodes.iter().map(|(k, d)| (*k, d)).collect();
                // consecutive members: the later depends on the earlier
                for w in 0..cycle.len() {
                    let a = cycle[w];
                    let b = cycle[(w + 1) % cycle.len()];
                    prop_assert!(deps[&b].contains(&a), "{} does not depend on {}", b, a);
                }
            }
            other => prop_assert!(false, "expected cycle, got {:?}", other),
        }
    }
}
