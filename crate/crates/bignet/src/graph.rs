//! Per-floor graph assembly (semantic / topological / spatial nodes joined
//! through relation nodes), region partitioning of oversized floors, and the
//! `.bgraph` on-disk format with its dataset manifest.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bim::{derive_aabb, ordered_pair, DeclaredRelation, FloorModel};
use crate::embedder::TextEmbedder;
use crate::error::{BignetError, Result};
use crate::features::{
    encode_component, encode_relation, encode_spatial, normalize_floor, to_homogeneous_feature,
    FeatureVector, LayoutTag,
};
use crate::spatial::find_spatial_pairs;

pub const BGRAPH_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Semantic,
    Topological,
    Spatial,
}

impl NodeType {
    pub fn index(self) -> usize {
        match self {
            NodeType::Semantic => 0,
            NodeType::Topological => 1,
            NodeType::Spatial => 2,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(NodeType::Semantic),
            1 => Ok(NodeType::Topological),
            2 => Ok(NodeType::Spatial),
            _ => Err(BignetError::Format(format!("bad node type byte {i}"))),
        }
    }

    pub fn hetero_width(self) -> usize {
        match self {
            NodeType::Semantic => crate::features::SEMANTIC_DIM,
            NodeType::Topological => crate::features::TOPOLOGICAL_DIM,
            NodeType::Spatial => crate::features::SPATIAL_DIM,
        }
    }
}

/// Node classification target for the design-checking tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    SemanticConflict,
    DataRangeError,
    TopologicalError,
}

pub const NUM_CLASSES: usize = 4;

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Correct => 0,
            Label::SemanticConflict => 1,
            Label::DataRangeError => 2,
            Label::TopologicalError => 3,
        }
    }

    pub fn from_index(i: u8) -> Result<Option<Self>> {
        match i {
            0 => Ok(Some(Label::Correct)),
            1 => Ok(Some(Label::SemanticConflict)),
            2 => Ok(Some(Label::DataRangeError)),
            3 => Ok(Some(Label::TopologicalError)),
            255 => Ok(None),
            _ => Err(BignetError::Format(format!("bad label byte {i}"))),
        }
    }
}

/// Where a node came from: one component, or the unordered pair a relation
/// node stands between.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSource {
    Component(String),
    Pair(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_type: NodeType,
    pub feature: FeatureVector,
    pub label: Option<Label>,
    pub source: NodeSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub floor_id: String,
    pub region_id: String,
    pub spatial_radius_m: f64,
}

/// An attributed bipartite graph over one floor (or region of a floor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimGraph {
    pub mode: GraphMode,
    pub nodes: Vec<GraphNode>,
    /// Undirected edges as node-index pairs; every edge joins a semantic
    /// node and a relation node.
    pub edges: Vec<(u32, u32)>,
    pub meta: GraphMeta,
}

impl BimGraph {
    pub fn node_count_by_type(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for n in &self.nodes {
            counts[n.node_type.index()] += 1;
        }
        counts
    }

    /// Check the structural invariants of the bipartite layout.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.nodes.len() as u32;
        let mut degree = vec![0usize; self.nodes.len()];
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(BignetError::Validation("edge endpoint out of range".into()));
            }
            let ta = self.nodes[a as usize].node_type;
            let tb = self.nodes[b as usize].node_type;
            let semantic_ends = [ta, tb].iter().filter(|t| **t == NodeType::Semantic).count();
            if semantic_ends != 1 {
                return Err(BignetError::Validation(
                    "edge must join one semantic and one relation node".into(),
                ));
            }
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_type != NodeType::Semantic && degree[i] != 2 {
                return Err(BignetError::Validation(format!(
                    "relation node {i} has degree {} (expected 2)",
                    degree[i]
                )));
            }
            let expected = match self.mode {
                GraphMode::Homogeneous => crate::features::HOMOGENEOUS_DIM,
                GraphMode::Heterogeneous => node.node_type.hetero_width(),
            };
            if node.feature.values.len() != expected {
                return Err(BignetError::Validation(format!(
                    "node {i} has feature width {} (expected {expected})",
                    node.feature.values.len()
                )));
            }
        }
        Ok(())
    }

    /// Row-major f64 feature matrix of the nodes with the given type.
    pub fn features_of_type(&self, t: NodeType) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.node_type == t {
                ids.push(i);
                rows.push(n.feature.values.clone());
            }
        }
        (ids, rows)
    }
}

fn f32_round(values: &mut [f64]) {
    for v in values.iter_mut() {
        *v = *v as f32 as f64;
    }
}

/// Build the graph for one floor: one semantic node per component, one
/// topological node per declared relation, one spatial node per discovered
/// pair (topological relations take precedence), two edges per relation
/// node, then per-column normalization of the assembled features.
///
/// Features are rounded through 32-bit floats at the end so an in-memory
/// graph and its serialized form are bit-identical.
pub fn build_graph(
    floor: &FloorModel,
    radius: f64,
    mode: GraphMode,
    embedder: &dyn TextEmbedder,
) -> Result<BimGraph> {
    floor.validate()?;

    // Semantic nodes in sorted component-id order, for determinism.
    let mut comp_order: Vec<usize> = (0..floor.components.len()).collect();
    comp_order.sort_by(|&a, &b| floor.components[a].id.cmp(&floor.components[b].id));

    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut semantic_index: HashMap<&str, u32> = HashMap::new();

    for &ci in &comp_order {
        let c = &floor.components[ci];
        semantic_index.insert(c.id.as_str(), nodes.len() as u32);
        nodes.push(GraphNode {
            node_type: NodeType::Semantic,
            feature: encode_component(c, embedder),
            label: Some(Label::Correct),
            source: NodeSource::Component(c.id.clone()),
        });
    }

    // One topological node per unordered pair; if several relations are
    // declared on the same pair the lowest kind index wins.
    let mut by_pair: HashMap<(String, String), &DeclaredRelation> = HashMap::new();
    for r in &floor.relations {
        let key = ordered_pair(&r.a_id, &r.b_id);
        by_pair
            .entry(key)
            .and_modify(|cur| {
                if r.kind.index() < cur.kind.index() {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut pairs: Vec<(&(String, String), &&DeclaredRelation)> = by_pair.iter().collect();
    pairs.sort_by(|a, b| a.0.cmp(b.0));

    for (key, rel) in pairs {
        let node_id = nodes.len() as u32;
        nodes.push(GraphNode {
            node_type: NodeType::Topological,
            feature: encode_relation(rel.kind),
            label: Some(Label::Correct),
            source: NodeSource::Pair(key.0.clone(), key.1.clone()),
        });
        edges.push((semantic_index[key.0.as_str()], node_id));
        edges.push((node_id, semantic_index[key.1.as_str()]));
    }

    // Spatial nodes; discovery already excludes declared pairs.
    for pair in find_spatial_pairs(floor, radius) {
        let node_id = nodes.len() as u32;
        edges.push((semantic_index[pair.a_id.as_str()], node_id));
        edges.push((node_id, semantic_index[pair.b_id.as_str()]));
        nodes.push(GraphNode {
            node_type: NodeType::Spatial,
            feature: encode_spatial(&pair.descriptor),
            label: Some(Label::Correct),
            source: NodeSource::Pair(pair.a_id, pair.b_id),
        });
    }

    // Per-floor normalization, column-wise within each node type group.
    for t in [NodeType::Semantic, NodeType::Topological, NodeType::Spatial] {
        let (ids, mut rows) = {
            let mut ids = Vec::new();
            let mut rows = Vec::new();
            for (i, n) in nodes.iter().enumerate() {
                if n.node_type == t {
                    ids.push(i);
                    rows.push(n.feature.values.clone());
                }
            }
            (ids, rows)
        };
        normalize_floor(&mut rows).map_err(|e| {
            BignetError::Encoding(format!("floor {}: {e}", floor.level_id))
        })?;
        for (id, row) in ids.into_iter().zip(rows) {
            nodes[id].feature.values = row;
        }
    }

    if mode == GraphMode::Homogeneous {
        for node in nodes.iter_mut() {
            node.feature = to_homogeneous_feature(&node.feature);
        }
    }
    for node in nodes.iter_mut() {
        f32_round(&mut node.feature.values);
    }

    let graph = BimGraph {
        mode,
        nodes,
        edges,
        meta: GraphMeta {
            floor_id: floor.level_id.clone(),
            region_id: floor.level_id.clone(),
            spatial_radius_m: radius,
        },
    };
    graph.check_invariants()?;
    Ok(graph)
}

/// Split oversized floors into non-overlapping regions by alternating
/// axis-aligned median cuts of the plan until each region's projected node
/// count fits `max_nodes`. Relations crossing a cut are dropped.
pub fn partition_regions(
    floors: &[FloorModel],
    max_nodes: usize,
    radius: f64,
) -> Vec<FloorModel> {
    let mut out = Vec::new();
    for floor in floors {
        split_recursive(floor.clone(), max_nodes, radius, 0, &mut out);
    }
    out
}

fn projected_node_count(floor: &FloorModel, radius: f64) -> usize {
    let declared: std::collections::HashSet<_> =
        floor.relations.iter().map(|r| ordered_pair(&r.a_id, &r.b_id)).collect();
    floor.components.len() + declared.len() + find_spatial_pairs(floor, radius).len()
}

fn split_recursive(
    floor: FloorModel,
    max_nodes: usize,
    radius: f64,
    depth: usize,
    out: &mut Vec<FloorModel>,
) {
    if floor.components.len() <= 1 {
        if projected_node_count(&floor, radius) > max_nodes {
            log::warn!(
                "region {} cannot be split below {} projected nodes",
                floor.level_id,
                max_nodes
            );
        }
        out.push(floor);
        return;
    }
    if projected_node_count(&floor, radius) <= max_nodes {
        out.push(floor);
        return;
    }

    // Median cut over component centroids, alternating x/y with depth.
    let axis = depth % 2;
    let mut order: Vec<usize> = (0..floor.components.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = derive_aabb(&floor.components[a]).center();
        let cb = derive_aabb(&floor.components[b]).center();
        let (va, vb) = if axis == 0 { (ca.x, cb.x) } else { (ca.y, cb.y) };
        va.partial_cmp(&vb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(floor.components[a].id.cmp(&floor.components[b].id))
    });
    let half = order.len() / 2;
    let left_ids: std::collections::HashSet<String> =
        order[..half].iter().map(|&i| floor.components[i].id.clone()).collect();

    let mut left = FloorModel {
        level_id: format!("{}/{}0", floor.level_id, axis_tag(axis)),
        components: Vec::new(),
        relations: Vec::new(),
    };
    let mut right = FloorModel {
        level_id: format!("{}/{}1", floor.level_id, axis_tag(axis)),
        components: Vec::new(),
        relations: Vec::new(),
    };
    for c in floor.components {
        if left_ids.contains(&c.id) {
            left.components.push(c);
        } else {
            right.components.push(c);
        }
    }
    for r in floor.relations {
        let la = left_ids.contains(&r.a_id);
        let lb = left_ids.contains(&r.b_id);
        match (la, lb) {
            (true, true) => left.relations.push(r),
            (false, false) => right.relations.push(r),
            // Cross-cut relations are dropped: regions do not overlap.
            _ => {}
        }
    }
    split_recursive(left, max_nodes, radius, depth + 1, out);
    split_recursive(right, max_nodes, radius, depth + 1, out);
}

fn axis_tag(axis: usize) -> &'static str {
    if axis == 0 {
        "x"
    } else {
        "y"
    }
}

// ---------------------------------------------------------------------------
// .bgraph serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BgraphHeader {
    version: u32,
    mode: GraphMode,
    node_count: u64,
    edge_count: u64,
    feature_len: u64,
    payload_sha256: String,
    meta: GraphMeta,
}

/// Write a graph to the `.bgraph` format: a JSON header line followed by a
/// binary payload (node types, labels, little-endian f32 features, u32 edge
/// list, and a string table of node sources), integrity-checked by SHA-256.
pub fn save_graph(graph: &BimGraph, path: &Path) -> Result<()> {
    let mut payload: Vec<u8> = Vec::new();
    for n in &graph.nodes {
        payload.push(n.node_type.index() as u8);
    }
    for n in &graph.nodes {
        payload.push(n.label.map(|l| l.index() as u8).unwrap_or(255));
    }
    let mut feature_len: u64 = 0;
    for n in &graph.nodes {
        feature_len += n.feature.values.len() as u64;
        for &v in &n.feature.values {
            payload.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    for &(a, b) in &graph.edges {
        payload.write_u32::<LittleEndian>(a)?;
        payload.write_u32::<LittleEndian>(b)?;
    }
    for n in &graph.nodes {
        match &n.source {
            NodeSource::Component(id) => {
                payload.push(0);
                write_str(&mut payload, id)?;
            }
            NodeSource::Pair(a, b) => {
                payload.push(1);
                write_str(&mut payload, a)?;
                write_str(&mut payload, b)?;
            }
        }
    }

    let digest = hex_digest(&payload);
    let header = BgraphHeader {
        version: BGRAPH_VERSION,
        mode: graph.mode,
        node_count: graph.nodes.len() as u64,
        edge_count: graph.edges.len() as u64,
        feature_len,
        payload_sha256: digest,
        meta: graph.meta.clone(),
    };

    // Atomic write: temp file in the same directory, then rename.
    let tmp = path.with_extension("bgraph.tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        w.write_all(&payload)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(BignetError::Format("source id longer than 65535 bytes".into()));
    }
    out.write_u16::<LittleEndian>(bytes.len() as u16)?;
    out.extend_from_slice(bytes);
    Ok(())
}

fn hex_digest(payload: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(payload);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_graph(path: &Path) -> Result<BimGraph> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::with_capacity(1 << 20, file);

    let mut header_line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte).map_err(|_| {
            BignetError::Format("truncated file: missing header".into())
        })?;
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: BgraphHeader = serde_json::from_slice(&header_line)?;
    if header.version != BGRAPH_VERSION {
        return Err(BignetError::Format(format!(
            "bgraph version mismatch: file {} vs supported {}",
            header.version, BGRAPH_VERSION
        )));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if hex_digest(&payload) != header.payload_sha256 {
        return Err(BignetError::Format("payload checksum failure".into()));
    }

    let n = header.node_count as usize;
    let mut cursor = std::io::Cursor::new(payload);

    let mut types = vec![0u8; n];
    cursor.read_exact(&mut types)?;
    let mut labels = vec![0u8; n];
    cursor.read_exact(&mut labels)?;

    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let node_type = NodeType::from_index(types[i])?;
        let (tag, width) = match header.mode {
            GraphMode::Homogeneous => {
                (LayoutTag::Homogeneous158, crate::features::HOMOGENEOUS_DIM)
            }
            GraphMode::Heterogeneous => {
                let tag = match node_type {
                    NodeType::Semantic => LayoutTag::Semantic144,
                    NodeType::Topological => LayoutTag::Topological3,
                    NodeType::Spatial => LayoutTag::Spatial11,
                };
                (tag, node_type.hetero_width())
            }
        };
        let mut values = Vec::with_capacity(width);
        for _ in 0..width {
            values.push(cursor.read_f32::<LittleEndian>()? as f64);
        }
        nodes.push(GraphNode {
            node_type,
            feature: FeatureVector { layout_tag: tag, values },
            label: Label::from_index(labels[i])?,
            source: NodeSource::Component(String::new()), // filled below
        });
    }

    let mut edges = Vec::with_capacity(header.edge_count as usize);
    for _ in 0..header.edge_count {
        let a = cursor.read_u32::<LittleEndian>()?;
        let b = cursor.read_u32::<LittleEndian>()?;
        edges.push((a, b));
    }

    for node in nodes.iter_mut() {
        let tag = cursor.read_u8()?;
        node.source = match tag {
            0 => NodeSource::Component(read_str(&mut cursor)?),
            1 => NodeSource::Pair(read_str(&mut cursor)?, read_str(&mut cursor)?),
            _ => return Err(BignetError::Format(format!("bad source tag {tag}"))),
        };
    }

    let graph = BimGraph { mode: header.mode, nodes, edges, meta: header.meta };
    graph.check_invariants()?;
    Ok(graph)
}

fn read_str(cursor: &mut std::io::Cursor<Vec<u8>>) -> Result<String> {
    let len = cursor.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    cursor.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| BignetError::Format(format!("bad utf-8 in source: {e}")))
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pretrain,
    TransferTrain,
    TransferVal,
    TransferTest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub split: Split,
    pub nodes: usize,
    pub edges: usize,
    pub nodes_by_type: [usize; 3],
    pub region_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub mode: GraphMode,
    pub spatial_radius_m: f64,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn total_nodes(&self) -> usize {
        self.entries.iter().map(|e| e.nodes).sum()
    }

    /// Load every graph in the given split.
    pub fn load_split(&self, split: Split, base: &Path) -> Result<Vec<BimGraph>> {
        let mut graphs = Vec::new();
        for e in self.entries.iter().filter(|e| e.split == split) {
            let p = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
            graphs.push(load_graph(&p)?);
        }
        Ok(graphs)
    }
}

/// An in-memory dataset: graphs plus their split assignment.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub graphs: Vec<BimGraph>,
    pub splits: Vec<Split>,
}

impl GraphDataset {
    pub fn new(graphs: Vec<BimGraph>) -> Self {
        let splits = vec![Split::Pretrain; graphs.len()];
        GraphDataset { graphs, splits }
    }

    pub fn of_split(&self, split: Split) -> Vec<&BimGraph> {
        self.graphs
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(g, _)| g)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bim::{
        BimComponent, DeclaredRelation, Positioning, RelationKind, ShapeClass, StructuralPurpose,
    };
    use crate::embedder::HashEmbedder;

    fn comp(id: &str, p: [f64; 3]) -> BimComponent {
        BimComponent {
            id: id.into(),
            category: "generic".into(),
            family_name: "Fam".into(),
            family_symbol_name: "Sym".into(),
            shape_class: ShapeClass::Cuboid,
            dims: [400.0, 400.0, 400.0],
            structural_purpose: StructuralPurpose::NonStructural,
            positioning: Positioning::Point { p },
            offsets: [0.0, 0.0],
            level_id: "L1".into(),
            aabb: None,
        }
    }

    fn floor(components: Vec<BimComponent>, relations: Vec<DeclaredRelation>) -> FloorModel {
        FloorModel { level_id: "L1".into(), components, relations }
    }

    #[test]
    fn connection_yields_three_nodes_two_edges() {
        let f = floor(
            vec![comp("a", [0.0; 3]), comp("b", [10.0, 0.0, 0.0])],
            vec![DeclaredRelation {
                kind: RelationKind::Connection,
                a_id: "a".into(),
                b_id: "b".into(),
            }],
        );
        let g = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.node_count_by_type(), [2, 1, 0]);
    }

    #[test]
    fn nearby_pair_yields_spatial_node() {
        let f = floor(vec![comp("a", [0.0; 3]), comp("b", [0.5, 0.0, 0.0])], vec![]);
        let g = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.node_count_by_type(), [2, 0, 1]);
    }

    #[test]
    fn topological_relation_takes_precedence() {
        // Touching components with a declared connection: exactly one
        // relation node, and it is topological.
        let f = floor(
            vec![comp("a", [0.0; 3]), comp("b", [0.4, 0.0, 0.0])],
            vec![DeclaredRelation {
                kind: RelationKind::Connection,
                a_id: "a".into(),
                b_id: "b".into(),
            }],
        );
        let g = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        assert_eq!(g.node_count_by_type(), [2, 1, 0]);
    }

    #[test]
    fn empty_floor_builds_empty_graph() {
        let f = floor(vec![], vec![]);
        let g = build_graph(&f, 0.3, GraphMode::Homogeneous, &HashEmbedder).unwrap();
        assert!(g.nodes.is_empty());
        assert!(g.edges.is_empty());
    }

    #[test]
    fn homogeneous_and_heterogeneous_topology_match() {
        let f = floor(
            vec![comp("a", [0.0; 3]), comp("b", [0.5, 0.0, 0.0]), comp("c", [10.0, 0.0, 0.0])],
            vec![DeclaredRelation {
                kind: RelationKind::Host,
                a_id: "b".into(),
                b_id: "c".into(),
            }],
        );
        let homo = build_graph(&f, 0.3, GraphMode::Homogeneous, &HashEmbedder).unwrap();
        let hetero = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        assert_eq!(homo.edges, hetero.edges);
        assert_eq!(homo.nodes.len(), hetero.nodes.len());
        for (a, b) in homo.nodes.iter().zip(&hetero.nodes) {
            assert_eq!(a.node_type, b.node_type);
            assert_eq!(a.source, b.source);
            assert_eq!(a.feature.values.len(), 158);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let f = floor(
            vec![comp("b", [0.5, 0.0, 0.0]), comp("a", [0.0; 3]), comp("c", [0.9, 0.0, 0.0])],
            vec![],
        );
        let g1 = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        let g2 = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn node_and_edge_counts_follow_sources() {
        let f = floor(
            vec![comp("a", [0.0; 3]), comp("b", [0.5, 0.0, 0.0]), comp("c", [0.9, 0.0, 0.0])],
            vec![DeclaredRelation {
                kind: RelationKind::Connection,
                a_id: "a".into(),
                b_id: "c".into(),
            }],
        );
        let g = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
        let spatial = crate::spatial::find_spatial_pairs(&f, 0.3).len();
        assert_eq!(g.nodes.len(), 3 + 1 + spatial);
        assert_eq!(g.edges.len(), 2 * (1 + spatial));
    }

    #[test]
    fn round_trip_empty_and_small() {
        let dir = tempfile::tempdir().unwrap();
        for f in [
            floor(vec![], vec![]),
            floor(vec![comp("a", [0.0; 3]), comp("b", [0.5, 0.0, 0.0])], vec![]),
        ] {
            let g = build_graph(&f, 0.3, GraphMode::Heterogeneous, &HashEmbedder).unwrap();
            let p = dir.path().join("g.bgraph");
            save_graph(&g, &p).unwrap();
            let loaded = load_graph(&p).unwrap();
            assert_eq!(loaded, g);
        }
    }

    #[test]
    fn corrupted_payload_detected() {
        let dir = tempfile::tempdir().unwrap();
        let f = floor(vec![comp("a", [0.0; 3]), comp("b", [0.5, 0.0, 0.0])], vec![]);
        let g = build_graph(&f, 0.3, GraphMode::Homogeneous, &HashEmbedder).unwrap();
        let p = dir.path().join("g.bgraph");
        save_graph(&g, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        std::fs::write(&p, bytes).unwrap();
        let err = load_graph(&p).unwrap_err();
        assert!(err.to_string().contains("checksum"));
    }

    #[test]
    fn partition_under_budget_is_identity() {
        let f = floor(vec![comp("a", [0.0; 3]), comp("b", [5.0, 0.0, 0.0])], vec![]);
        let regions = partition_regions(&[f.clone()], 100, 0.3);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].components.len(), 2);
    }

    #[test]
    fn partition_row_of_components() {
        let comps: Vec<BimComponent> =
            (0..100).map(|i| comp(&format!("c{i:03}"), [i as f64, 0.0, 0.0])).collect();
        let f = floor(comps, vec![]);
        let regions = partition_regions(&[f], 50, 0.3);
        assert!(regions.len() >= 2);
        let mut all: Vec<&str> = regions
            .iter()
            .flat_map(|r| r.components.iter().map(|c| c.id.as_str()))
            .collect();
        all.sort();
        assert_eq!(all.len(), 100);
        all.dedup();
        assert_eq!(all.len(), 100, "components must appear in exactly one region");
        for r in &regions {
            assert!(projected_node_count(r, 0.3) <= 50);
        }
    }

    #[test]
    fn partition_membership_exclusive_on_random_floor() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let comps: Vec<BimComponent> = (0..120)
            .map(|i| {
                comp(
                    &format!("c{i:03}"),
                    [rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), 0.0],
                )
            })
            .collect();
        let f = floor(comps, vec![]);
        let regions = partition_regions(&[f], 40, 0.3);
        let mut seen = std::collections::HashSet::new();
        for r in &regions {
            for c in &r.components {
                assert!(seen.insert(c.id.clone()), "{} appears twice", c.id);
            }
        }
        assert_eq!(seen.len(), 120);
    }
}
