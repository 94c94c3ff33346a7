use std::collections::HashMap;
use std::sync::OnceLock;

/// The nine directional relation families, followed by `Other`.
pub const FAMILIES: [&str; 9] = [
    "Cause-Effect",
    "Instrument-Agency",
    "Product-Producer",
    "Content-Container",
    "Entity-Origin",
    "Entity-Destination",
    "Component-Whole",
    "Member-Collection",
    "Message-Topic",
];

pub const OTHER: &str = "Other";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(e1,e2)`
    Forward,
    /// `(e2,e1)`
    Reverse,
}

/// The 19 SemEval-2010 Task 8 classes. Class `2f + d` is family `f` with
/// direction `d` (0 = `(e1,e2)`, 1 = `(e2,e1)`); class 18 is `Other`.
#[derive(Debug, Clone)]
pub struct RelationSchema {
    classes: Vec<String>,
    ids: HashMap<String, usize>,
}

impl RelationSchema {
    pub fn semeval() -> &'static RelationSchema {
        static SCHEMA: OnceLock<RelationSchema> = OnceLock::new();
        SCHEMA.get_or_init(|| {
            let mut classes = Vec::with_capacity(19);
            for f in FAMILIES {
                classes.push(format!("{f}(e1,e2)"));
                classes.push(format!("{f}(e2,e1)"));
            }
            classes.push(OTHER.to_string());
            let ids = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
            RelationSchema { classes, ids }
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }

    pub fn other(&self) -> usize {
        self.classes.len() - 1
    }

    pub fn num_families(&self) -> usize {
        FAMILIES.len()
    }

    /// Family index, or `None` for `Other`.
    pub fn family(&self, id: usize) -> Option<usize> {
        (id < self.other()).then_some(id / 2)
    }

    pub fn family_name(&self, family: usize) -> &'static str {
        FAMILIES[family]
    }

    pub fn direction(&self, id: usize) -> Option<Direction> {
        self.family(id).map(|_| {
            if id.is_multiple_of(2) {
                Direction::Forward
            } else {
                Direction::Reverse
            }
        })
    }

    /// The same family with the opposite direction; `Other` maps to itself.
    pub fn flip(&self, id: usize) -> usize {
        match self.family(id) {
            Some(_) => id ^ 1,
            None => id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nineteen_classes_bijective() {
        let s = RelationSchema::semeval();
        assert_eq!(s.len(), 19);
        for i in 0..19 {
            assert_eq!(s.id(s.name(i).unwrap()), Some(i));
        }
        assert_eq!(s.name(s.other()), Some("Other"));
        assert_eq!(s.family(s.other()), None);
        assert_eq!(s.flip(s.other()), s.other());
    }

    #[test]
    fn directions_pair_up() {
        let s = RelationSchema::semeval();
        let ce12 = s.id("Cause-Effect(e1,e2)").unwrap();
        let ce21 = s.id("Cause-Effect(e2,e1)").unwrap();
        assert_eq!(s.flip(ce12), ce21);
        assert_eq!(s.family(ce12), s.family(ce21));
        assert_eq!(s.direction(ce21), Some(Direction::Reverse));
        assert_eq!(s.id("Message-Topic(e2,e1)"), Some(17));
    }
}
