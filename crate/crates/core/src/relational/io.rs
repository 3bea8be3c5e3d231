//! JSON instance files.
//!
//! ```json
//! {"attributes": [{"name": "A", "domain_size": 3}, {"name": "B", "domain_size": 2}],
//!  "relations": [{"schema": ["A", "B"], "tuples": [[1, 0, 1], [2, 0, 1]]}]}
//! ```
//!
//! Each tuple lists the attribute values in schema order followed by a positive frequency.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Attribute, Instance, JoinQuery, Relation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub attributes: Vec<Attribute>,
    pub relations: Vec<RelationFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationFile {
    pub schema: Vec<String>,
    pub tuples: Vec<Vec<u64>>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        let mut edges = Vec::with_capacity(self.relations.len());
        for (i, rel) in self.relations.iter().enumerate() {
            let edge = rel
                .schema
                .iter()
                .map(|name| {
                    self.attributes
                        .iter()
                        .position(|a| &a.name == name)
                        .ok_or_else(|| {
                            Error::InvalidSchema(format!("relation {i} names unknown attribute `{name}`"))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            edges.push(edge);
        }
        let query = JoinQuery::new(self.attributes, edges.clone())?;
        let mut relations = Vec::with_capacity(edges.len());
        for (i, (rel, given)) in self.relations.into_iter().zip(&edges).enumerate() {
            // Reorder file columns into the query's ascending attribute order.
            let perm: Vec<usize> = query
                .edge(i)
                .iter()
                .map(|a| given.iter().position(|g| g == a).unwrap())
                .collect();
            let mut r = Relation::new();
            for (row_no, row) in rel.tuples.into_iter().enumerate() {
                if row.len() != perm.len() + 1 {
                    return Err(Error::InvalidInstance(format!(
                        "relation {i} row {row_no}: expected {} values and a frequency, got {} numbers",
                        perm.len(),
                        row.len()
                    )));
                }
                let freq = row[perm.len()];
                if freq == 0 {
                    return Err(Error::InvalidInstance(format!(
                        "relation {i} row {row_no}: frequency must be positive"
                    )));
                }
                let tuple = perm
                    .iter()
                    .map(|&p| {
                        u32::try_from(row[p]).map_err(|_| {
                            Error::InvalidInstance(format!(
                                "relation {i} row {row_no}: value {} out of range",
                                row[p]
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                r.add(tuple, freq);
            }
            relations.push(r);
        }
        Instance::new(query, relations)
    }

    pub fn from_instance(instance: &Instance) -> Self {
        let query = instance.query();
        InstanceFile {
            attributes: query.attributes().to_vec(),
            relations: query
                .edges()
                .iter()
                .zip(instance.relations())
                .map(|(edge, rel)| RelationFile {
                    schema: edge.iter().map(|&a| query.name(a).to_string()).collect(),
                    tuples: rel
                        .support()
                        .iter()
                        .map(|(t, &f)| t.iter().map(|&v| v as u64).chain([f]).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_instance()
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn instance_to_json(instance: &Instance) -> String {
    serde_json::to_string(&InstanceFile::from_instance(instance)).expect("instance serializes")
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance_to_json(instance))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_are_reordered_and_round_trip() {
        let text = r#"{"attributes":[{"name":"A","domain_size":3},{"name":"B","domain_size":2}],
            "relations":[{"schema":["B","A"],"tuples":[[0,2,5],[1,1,1],[0,2,1]]}]}"#;
        let inst = parse_instance(text).unwrap();
        assert_eq!(inst.relation(0).get(&[2, 0]), 6);
        assert_eq!(inst.relation(0).get(&[1, 1]), 1);
        let again = parse_instance(&instance_to_json(&inst)).unwrap();
        assert_eq!(again, inst);
    }

    #[test]
    fn malformed_json_reports_a_line() {
        let err = parse_instance("{\n\"attributes\": [\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn zero_frequency_is_rejected() {
        let text = r#"{"attributes":[{"name":"A","domain_size":3}],
            "relations":[{"schema":["A"],"tuples":[[0,0]]}]}"#;
        assert!(matches!(parse_instance(text), Err(Error::InvalidInstance(_))));
    }
}
