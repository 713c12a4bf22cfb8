//! Class hierarchy and the predicates derived from it.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{ObjectId, WorldError};

pub const ROOT_CLASS: &str = "object";

/// Class hierarchy: every class has one parent, chains end at the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    parent: BTreeMap<String, String>,
    root: String,
}

impl Taxonomy {
    /// Builds and validates a taxonomy from `(child, parent)` edges.
    pub fn new<I, S>(edges: I) -> Result<Self, WorldError>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut parent = BTreeMap::new();
        for (child, par) in edges {
            let (child, par) = (child.into(), par.into());
            if child == ROOT_CLASS {
                return Err(WorldError::Validation(format!(
                    "taxonomy root '{ROOT_CLASS}' cannot have a parent"
                )));
            }
            if let Some(prev) = parent.insert(child.clone(), par.clone()) {
                if prev != par {
                    return Err(WorldError::Validation(format!(
                        "class '{child}' has two parents: '{prev}' and '{par}'"
                    )));
                }
            }
        }
        let taxonomy = Self {
            parent,
            root: ROOT_CLASS.to_string(),
        };
        for class in taxonomy.parent.keys() {
            taxonomy.walk(class)?;
        }
        Ok(taxonomy)
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn contains(&self, class: &str) -> bool {
        class == self.root || self.parent.contains_key(class)
    }

    pub fn parent_of(&self, class: &str) -> Option<&str> {
        self.parent.get(class).map(String::as_str)
    }

    /// `(child, parent)` edges in class order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parent.iter().map(|(c, p)| (c.as_str(), p.as_str()))
    }

    fn walk(&self, class: &str) -> Result<Vec<String>, WorldError> {
        if !self.contains(class) {
            return Err(WorldError::UnknownClass(class.to_string()));
        }
        let mut chain = vec![class.to_string()];
        let mut current = class;
        while current != self.root {
            let next = match self.parent.get(current) {
                Some(p) => p.as_str(),
                None => {
                    return Err(WorldError::Validation(format!(
                        "taxonomy chain of '{class}' ends at '{current}' instead of '{}'",
                        self.root
                    )))
                }
            };
            if chain.iter().any(|c| c == next) {
                return Err(WorldError::Validation(format!(
                    "cyclic taxonomy through class '{next}'"
                )));
            }
            chain.push(next.to_string());
            current = next;
        }
        Ok(chain)
    }

    /// `[class, parent, …, root]`.
    pub fn chain(&self, class: &str) -> Result<Vec<String>, WorldError> {
        self.walk(class)
    }

    /// Classes with no children, excluding the root.
    pub fn leaves(&self) -> Vec<&str> {
        let parents: BTreeSet<&str> = self.parent.values().map(String::as_str).collect();
        self.parent
            .keys()
            .map(String::as_str)
            .filter(|c| !parents.contains(c))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredicateKind {
    InstanceOf,
    IsA,
}

/// A symbolic fact. `instance-of` subjects are object ids, `is-a` subjects are classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Predicate {
    pub kind: PredicateKind,
    pub subject: String,
    pub object: String,
}

impl Predicate {
    pub fn instance_of(id: ObjectId, class: &str) -> Self {
        Self {
            kind: PredicateKind::InstanceOf,
            subject: id.to_string(),
            object: class.to_string(),
        }
    }

    pub fn is_a(class: &str, parent: &str) -> Self {
        Self {
            kind: PredicateKind::IsA,
            subject: class.to_string(),
            object: parent.to_string(),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            PredicateKind::InstanceOf => "instance-of",
            PredicateKind::IsA => "is-a",
        };
        write!(f, "{kind}({}, {})", self.subject, self.object)
    }
}

/// `instance-of(id, class)` plus one `is-a` fact per link of the class chain.
pub fn predicates_for(
    object_id: ObjectId,
    class_label: &str,
    taxonomy: &Taxonomy,
) -> Result<BTreeSet<Predicate>, WorldError> {
    let chain = taxonomy.chain(class_label)?;
    let mut out = BTreeSet::new();
    out.insert(Predicate::instance_of(object_id, class_label));
    for link in chain.windows(2) {
        out.insert(Predicate::is_a(&link[0], &link[1]));
    }
    Ok(out)
}
