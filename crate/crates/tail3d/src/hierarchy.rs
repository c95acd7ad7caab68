//! Semantic class hierarchy and cardinality bucketing.
//!
//! The hierarchy is a fixed-depth tree: a single root, coarse classes under
//! it, and fine (leaf) classes exactly two levels below the root. Detectors
//! and ground truth label fine classes; the tree supplies the notion of
//! "related class" used for partial credit during matching, and superclass
//! membership for confusion matrices.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("class `{0}` appears more than once")]
    DuplicateClass(String),
    #[error("class `{0}` is listed under two parents")]
    TwoParents(String),
    #[error("hierarchy has multiple roots: `{0}` and `{1}`")]
    MultipleRoots(String, String),
    #[error("hierarchy contains a cycle through `{0}`")]
    CycleDetected(String),
    #[error("class `{class}` sits at depth {depth}, fine classes must sit at depth 2")]
    WrongDepth { class: String, depth: usize },
    #[error("hierarchy declares no fine classes")]
    NoFineClasses,
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{0}` is not a fine class")]
    NotAFineClass(String),
    #[error("few threshold {few} exceeds many threshold {many}")]
    InvalidThresholds { many: u64, few: u64 },
    #[error("failed to read hierarchy document: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse hierarchy document: {0}")]
    Parse(#[from] serde_json::Error),
}

/// On-disk form: a root name plus a map from coarse class to its fine classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct HierarchyDoc {
    root: String,
    children: BTreeMap<String, Vec<String>>,
}

/// Validated class tree of depth 2.
#[derive(Debug, Clone)]
pub struct ClassHierarchy {
    root: String,
    /// child -> parent; the root has no entry.
    parent: BTreeMap<String, String>,
    /// parent -> children, in document order.
    children: BTreeMap<String, Vec<String>>,
    /// Fine classes: coarse classes in sorted order, each one's children in
    /// document order.
    fine: Vec<String>,
    fine_set: BTreeSet<String>,
}

impl ClassHierarchy {
    /// Builds from an explicit root and a coarse -> fine children map.
    pub fn from_document(
        root: &str,
        children: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self, HierarchyError> {
        let mut edges = Vec::new();
        for (coarse, fines) in children {
            edges.push((root.to_string(), coarse.clone()));
            for fine in fines {
                edges.push((coarse.clone(), fine.clone()));
            }
        }
        Self::from_edges(&edges)
    }

    /// Builds from (parent, child) edges. The root is the unique node that
    /// never appears as a child.
    pub fn from_edges(edges: &[(String, String)]) -> Result<Self, HierarchyError> {
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut nodes: BTreeSet<String> = BTreeSet::new();

        for (p, c) in edges {
            nodes.insert(p.clone());
            nodes.insert(c.clone());
            match parent.get(c) {
                Some(existing) if existing == p => {
                    return Err(HierarchyError::DuplicateClass(c.clone()))
                }
                Some(_) => return Err(HierarchyError::TwoParents(c.clone())),
                None => {
                    parent.insert(c.clone(), p.clone());
                    children.entry(p.clone()).or_default().push(c.clone());
                }
            }
        }

        if nodes.is_empty() {
            return Err(HierarchyError::NoFineClasses);
        }

        let mut roots = nodes.iter().filter(|n| !parent.contains_key(*n));
        let root = match (roots.next(), roots.next()) {
            (Some(r), None) => r.clone(),
            (Some(a), Some(b)) => {
                return Err(HierarchyError::MultipleRoots(a.clone(), b.clone()))
            }
            // Every node has a parent, so following parents from anywhere
            // must revisit a node.
            (None, _) => return Err(Self::find_cycle(&parent, &nodes)),
        };

        // Depths via BFS from the root; anything unreached hangs off a cycle.
        let mut depth: BTreeMap<String, usize> = BTreeMap::new();
        depth.insert(root.clone(), 0);
        let mut queue = vec![root.clone()];
        while let Some(node) = queue.pop() {
            let d = depth[&node];
            if let Some(kids) = children.get(&node) {
                for kid in kids {
                    depth.insert(kid.clone(), d + 1);
                    queue.push(kid.clone());
                }
            }
        }
        if depth.len() != nodes.len() {
            return Err(Self::find_cycle(&parent, &nodes));
        }

        if nodes.len() == 1 {
            return Err(HierarchyError::NoFineClasses);
        }
        for (node, d) in &depth {
            let is_leaf = !children.contains_key(node);
            if *d > 2 || (is_leaf && *d != 2) {
                return Err(HierarchyError::WrongDepth {
                    class: node.clone(),
                    depth: *d,
                });
            }
        }

        let mut fine = Vec::new();
        if let Some(coarse_list) = children.get(&root) {
            let mut sorted = coarse_list.clone();
            sorted.sort();
            for coarse in &sorted {
                if let Some(kids) = children.get(coarse) {
                    fine.extend(kids.iter().cloned());
                }
            }
        }
        if fine.is_empty() {
            return Err(HierarchyError::NoFineClasses);
        }
        let fine_set = fine.iter().cloned().collect();

        Ok(Self {
            root,
            parent,
            children,
            fine,
            fine_set,
        })
    }

    fn find_cycle(parent: &BTreeMap<String, String>, nodes: &BTreeSet<String>) -> HierarchyError {
        // Walk parent pointers from the smallest node until one repeats.
        let start = nodes.iter().next().expect("non-empty node set");
        let mut seen = BTreeSet::new();
        let mut cur = start.clone();
        loop {
            if !seen.insert(cur.clone()) {
                return HierarchyError::CycleDetected(cur);
            }
            match parent.get(&cur) {
                Some(p) => cur = p.clone(),
                None => {
                    // Walked out of the cycle region; report the start.
                    return HierarchyError::CycleDetected(start.clone());
                }
            }
        }
    }

    /// Parses the JSON document form.
    pub fn from_json(text: &str) -> Result<Self, HierarchyError> {
        let doc: HierarchyDoc = serde_json::from_str(text)?;
        Self::from_document(&doc.root, &doc.children)
    }

    /// Reads and parses a JSON document from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HierarchyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Built-in hierarchy looked up by name. `nuscenes` is the 19-class
    /// autonomous-driving taxonomy grouped under vehicle, pedestrian and
    /// movable obstacles.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "nuscenes" => Some(Self::nuscenes()),
            _ => None,
        }
    }

    /// The nuScenes taxonomy: three coarse groups over 19 fine classes.
    pub fn nuscenes() -> Self {
        let mut children = BTreeMap::new();
        children.insert(
            "vehicle".to_string(),
            [
                "car",
                "truck",
                "bus",
                "trailer",
                "construction-vehicle",
                "emergency-vehicle",
                "motorcycle",
                "bicycle",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        );
        children.insert(
            "pedestrian".to_string(),
            [
                "adult",
                "child",
                "construction-worker",
                "police-officer",
                "stroller",
                "wheelchair",
                "personal-mobility",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        );
        children.insert(
            "movable".to_string(),
            ["barrier", "traffic-cone", "pushable-pullable", "debris"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        Self::from_document("object", &children).expect("preset hierarchy is valid")
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    /// Fine classes, coarse groups in sorted order and members in document
    /// order within each group.
    pub fn fine_classes(&self) -> &[String] {
        &self.fine
    }

    pub fn coarse_classes(&self) -> Vec<&str> {
        self.children
            .get(&self.root)
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn contains(&self, name: &str) -> bool {
        name == self.root || self.parent.contains_key(name)
    }

    pub fn is_fine(&self, name: &str) -> bool {
        self.fine_set.contains(name)
    }

    pub fn parent_of(&self, name: &str) -> Option<&str> {
        self.parent.get(name).map(String::as_str)
    }

    /// Fine children of a coarse class, in document order.
    pub fn children_of(&self, name: &str) -> Option<&[String]> {
        self.children.get(name).map(Vec::as_slice)
    }

    /// Errors unless `name` is a known fine class.
    pub fn ensure_fine(&self, name: &str) -> Result<(), HierarchyError> {
        if !self.contains(name) {
            return Err(HierarchyError::UnknownClass(name.to_string()));
        }
        if !self.is_fine(name) {
            return Err(HierarchyError::NotAFineClass(name.to_string()));
        }
        Ok(())
    }

    /// Tree distance from each class up to their lowest common ancestor:
    /// 0 for the same class, 1 for classes sharing a coarse parent, 2 when
    /// only the root relates them.
    pub fn lca_distance(&self, a: &str, b: &str) -> Result<u8, HierarchyError> {
        self.ensure_fine(a)?;
        self.ensure_fine(b)?;
        if a == b {
            return Ok(0);
        }
        if self.parent.get(a) == self.parent.get(b) {
            return Ok(1);
        }
        Ok(2)
    }

    /// Fine classes sharing `name`'s coarse parent, excluding `name` itself.
    pub fn siblings(&self, name: &str) -> Result<Vec<String>, HierarchyError> {
        self.ensure_fine(name)?;
        let parent = self.parent.get(name).expect("fine class has a parent");
        Ok(self
            .children
            .get(parent)
            .expect("parent has children")
            .iter()
            .filter(|c| c.as_str() != name)
            .cloned()
            .collect())
    }
}

/// Cardinality bucket of a class, by ground-truth instance count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Many,
    Medium,
    Few,
}

impl std::fmt::Display for Bucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bucket::Many => write!(f, "many"),
            Bucket::Medium => write!(f, "medium"),
            Bucket::Few => write!(f, "few"),
        }
    }
}

pub const DEFAULT_MANY_THRESHOLD: u64 = 50_000;
pub const DEFAULT_FEW_THRESHOLD: u64 = 5_000;

/// Instance counts plus the two thresholds that split classes into
/// many / medium / few buckets.
#[derive(Debug, Clone)]
pub struct CardinalityBuckets {
    pub counts: BTreeMap<String, u64>,
    pub many_threshold: u64,
    pub few_threshold: u64,
}

impl CardinalityBuckets {
    pub fn new(
        counts: BTreeMap<String, u64>,
        many_threshold: u64,
        few_threshold: u64,
    ) -> Result<Self, HierarchyError> {
        if few_threshold > many_threshold {
            return Err(HierarchyError::InvalidThresholds {
                many: many_threshold,
                few: few_threshold,
            });
        }
        Ok(Self {
            counts,
            many_threshold,
            few_threshold,
        })
    }

    pub fn with_default_thresholds(counts: BTreeMap<String, u64>) -> Self {
        Self::new(counts, DEFAULT_MANY_THRESHOLD, DEFAULT_FEW_THRESHOLD)
            .expect("default thresholds are ordered")
    }

    /// Bucket for a raw count. Strictly above `many_threshold` is Many,
    /// strictly below `few_threshold` is Few, both boundaries land in Medium.
    pub fn bucket_of(&self, count: u64) -> Bucket {
        if count > self.many_threshold {
            Bucket::Many
        } else if count >= self.few_threshold {
            Bucket::Medium
        } else {
            Bucket::Few
        }
    }

    /// Bucket for every fine class of the hierarchy; classes missing from
    /// the counts map count as zero.
    pub fn bucket_classes(&self, hierarchy: &ClassHierarchy) -> BTreeMap<String, Bucket> {
        hierarchy
            .fine_classes()
            .iter()
            .map(|c| {
                let n = self.counts.get(c).copied().unwrap_or(0);
                (c.clone(), self.bucket_of(n))
            })
            .collect()
    }
}
