use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dag::{topological_layers, DagError};
use crate::agents::{AgentName, AgentSpec, OutputContract, SectionSource, SpecError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GraphLabel {
    Mas,
    Sas,
    Custom(String),
}

impl GraphLabel {
    pub fn as_str(&self) -> &str {
        match self {
            GraphLabel::Mas => "MAS",
            GraphLabel::Sas => "SAS",
            GraphLabel::Custom(s) => s,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s.trim() {
            t if t.eq_ignore_ascii_case("mas") => GraphLabel::Mas,
            t if t.eq_ignore_ascii_case("sas") => GraphLabel::Sas,
            t => GraphLabel::Custom(t.to_string()),
        }
    }
}

impl fmt::Display for GraphLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for GraphLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for GraphLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(GraphLabel::parse(&String::deserialize(d)?))
    }
}

/// One agent plus the nodes whose outputs must exist before it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    #[serde(flatten)]
    pub spec: AgentSpec,
    #[serde(default)]
    pub depends_on: BTreeSet<AgentName>,
}

impl GraphNode {
    pub fn id(&self) -> AgentName {
        self.spec.name
    }
}

/// Declarative graph definition; also the on-disk document format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineGraph {
    pub label: GraphLabel,
    #[serde(rename = "agents")]
    pub nodes: Vec<GraphNode>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error(transparent)]
    Dag(#[from] DagError<AgentName>),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("node {node} reads output of {source_agent}, which is not among its ancestors")]
    UnreachableSource { node: AgentName, source_agent: AgentName },
    #[error("node {0} reads the actual outcome; only the validation node may")]
    OutcomeLeak(AgentName),
    #[error("{label} graph must have exactly one terminal node, found {found:?}")]
    Terminal { label: GraphLabel, found: Vec<AgentName> },
    #[error("graph has {0} prediction-template nodes, at most one is allowed")]
    PredictionNodes(usize),
    #[error("{0} graph has no prediction-template node")]
    NoPrediction(GraphLabel),
    #[error("reading graph document {path}: {message}")]
    Document { path: String, message: String },
}

/// A graph that passed validation, with its layered order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedGraph {
    graph: PipelineGraph,
    layers: Vec<Vec<AgentName>>,
}

impl ValidatedGraph {
    pub fn new(graph: PipelineGraph) -> Result<Self, GraphError> {
        let layers = validate_dag(&graph)?;
        Ok(Self { graph, layers })
    }

    pub fn graph(&self) -> &PipelineGraph {
        &self.graph
    }

    pub fn label(&self) -> &GraphLabel {
        &self.graph.label
    }

    pub fn layers(&self) -> &[Vec<AgentName>] {
        &self.layers
    }

    pub fn node(&self, id: AgentName) -> Option<&GraphNode> {
        self.graph.node(id)
    }

    /// The node whose output is parsed as the prediction, if any.
    pub fn prediction_node(&self) -> Option<AgentName> {
        self.graph
            .nodes
            .iter()
            .find(|n| n.spec.output_contract == OutputContract::PredictionTemplate)
            .map(GraphNode::id)
    }
}

impl PipelineGraph {
    pub fn node(&self, id: AgentName) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id() == id)
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.depends_on.len()).sum()
    }

    /// Nodes nothing else depends on.
    pub fn terminal_nodes(&self) -> Vec<AgentName> {
        let used: BTreeSet<AgentName> = self.nodes.iter().flat_map(|n| n.depends_on.iter().copied()).collect();
        self.nodes.iter().map(GraphNode::id).filter(|id| !used.contains(id)).collect()
    }

    pub fn from_json(json: &str) -> Result<Self, GraphError> {
        serde_json::from_str(json).map_err(|e| GraphError::Document { path: "<inline>".into(), message: e.to_string() })
    }

    pub fn from_path(path: &Path) -> Result<Self, GraphError> {
        let doc = |message: String| GraphError::Document { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| doc(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| doc(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

/// Checks structure, specs and data flow, and returns the layered order.
pub fn validate_dag(graph: &PipelineGraph) -> Result<Vec<Vec<AgentName>>, GraphError> {
    let pairs: Vec<(AgentName, BTreeSet<AgentName>)> =
        graph.nodes.iter().map(|n| (n.id(), n.depends_on.clone())).collect();
    let layers = topological_layers(&pairs)?;

    let mut ancestors: BTreeMap<AgentName, BTreeSet<AgentName>> = BTreeMap::new();
    for id in layers.iter().flatten() {
        let node = graph.node(*id).expect("layered node exists");
        node.spec.validate()?;
        let mut anc = BTreeSet::new();
        for d in &node.depends_on {
            anc.insert(*d);
            anc.extend(ancestors[d].iter().copied());
        }
        if let Some(src) = node.spec.upstream_sources().into_iter().find(|s| !anc.contains(s)) {
            return Err(GraphError::UnreachableSource { node: *id, source_agent: src });
        }
        if *id != AgentName::Validation && node.spec.uses(&SectionSource::ActualOutcome) {
            return Err(GraphError::OutcomeLeak(*id));
        }
        ancestors.insert(*id, anc);
    }

    let predictors = graph
        .nodes
        .iter()
        .filter(|n| n.spec.output_contract == OutputContract::PredictionTemplate)
        .count();
    if predictors > 1 {
        return Err(GraphError::PredictionNodes(predictors));
    }
    if matches!(graph.label, GraphLabel::Mas | GraphLabel::Sas) {
        let terminals = graph.terminal_nodes();
        if terminals.len() != 1 {
            return Err(GraphError::Terminal { label: graph.label.clone(), found: terminals });
        }
        if predictors == 0 {
            return Err(GraphError::NoPrediction(graph.label.clone()));
        }
    }
    Ok(layers)
}

fn node(name: AgentName, deps: &[AgentName]) -> GraphNode {
    GraphNode { spec: AgentSpec::default_for(name), depends_on: deps.iter().copied().collect() }
}

/// The seven-agent pipeline: three analysts feed integration, then
/// prediction, transparency and validation in sequence.
pub fn build_mas_graph() -> PipelineGraph {
    use AgentName::*;
    PipelineGraph {
        label: GraphLabel::Mas,
        nodes: vec![
            node(LabAnalysis, &[]),
            node(VitalsAnalysis, &[]),
            node(ContextAnalysis, &[]),
            node(Integration, &[LabAnalysis, VitalsAnalysis, ContextAnalysis]),
            node(Prediction, &[Integration]),
            node(Transparency, &[Prediction]),
            node(Validation, &[Transparency]),
        ],
    }
}

/// One agent that sees the whole feature bundle and answers in a single
/// completion.
pub fn build_sas_graph() -> PipelineGraph {
    PipelineGraph { label: GraphLabel::Sas, nodes: vec![node(AgentName::SasAllInOne, &[])] }
}
