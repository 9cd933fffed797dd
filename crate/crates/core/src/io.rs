//! Edge-list and attribute-table formats.
//!
//! Edge list: one `from to` pair per line, whitespace separated; blank lines
//! and lines starting with `#` are ignored. Attribute table: CSV with header
//! `id,<variable>,...`; row order defines node order and the `id` column maps
//! edge-list tokens to nodes. Without an attribute table nodes are `1..=n`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSchema {
    pub n: usize,
    pub directed: bool,
    #[serde(default)]
    pub variables: Vec<Variable>,
}

impl NetworkSchema {
    pub fn of(net: &Network) -> Self {
        NetworkSchema {
            n: net.n(),
            directed: net.is_directed(),
            variables: net.variables().to_vec(),
        }
    }
}

/// A network together with the external node ids it was read with.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledNetwork {
    pub network: Network,
    pub ids: Vec<String>,
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

pub fn read_network(
    edges: &str,
    attributes: Option<&str>,
    schema: &NetworkSchema,
) -> Result<LabeledNetwork> {
    let mut net = Network::empty(schema.n, schema.directed, schema.variables.clone())?;
    let ids: Vec<String> = match attributes {
        Some(text) => read_attributes(text, schema, &mut net)?,
        None => (1..=schema.n).map(|i| i.to_string()).collect(),
    };
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    for (lineno, line) in edges.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(parse_err(
                "edges",
                line_no,
                format!("expected 2 node ids, found {}", tokens.len()),
            ));
        }
        let lookup = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| parse_err("edges", line_no, format!("unknown node id '{t}'")))
        };
        let (i, j) = (lookup(tokens[0])?, lookup(tokens[1])?);
        if i == j {
            return Err(parse_err(
                "edges",
                line_no,
                format!("self-loop on '{}'", tokens[0]),
            ));
        }
        if net.has_edge(i, j) {
            return Err(parse_err(
                "edges",
                line_no,
                format!("duplicate edge {} {}", tokens[0], tokens[1]),
            ));
        }
        net.set_edge(i, j, true)?;
    }
    Ok(LabeledNetwork { network: net, ids })
}

fn read_attributes(text: &str, schema: &NetworkSchema, net: &mut Network) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err("attributes", 1, e.to_string()))?
        .clone();
    if header.len() != schema.variables.len() + 1 {
        return Err(parse_err(
            "attributes",
            1,
            format!(
                "header has {} columns, schema declares {} variables plus id",
                header.len(),
                schema.variables.len()
            ),
        ));
    }
    // column -> variable index
    let mut columns = Vec::new();
    for name in header.iter().skip(1) {
        let v = schema
            .variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| parse_err("attributes", 1, format!("column '{name}' not in schema")))?;
        columns.push(v);
    }
    let mut ids = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line_no = row + 2;
        let record = record.map_err(|e| parse_err("attributes", line_no, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                "attributes",
                line_no,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        if ids.len() == schema.n {
            return Err(parse_err(
                "attributes",
                line_no,
                format!("more than {} rows", schema.n),
            ));
        }
        let node = ids.len();
        let id = record[0].to_string();
        if ids.contains(&id) {
            return Err(parse_err(
                "attributes",
                line_no,
                format!("duplicate node id '{id}'"),
            ));
        }
        for (field, &var) in record.iter().skip(1).zip(&columns) {
            let levels = schema.variables[var].levels;
            let level: u32 = field.parse().ok().filter(|&l| l < levels).ok_or_else(|| {
                parse_err(
                    "attributes",
                    line_no,
                    format!(
                        "unknown level '{field}' for '{}' ({levels} levels)",
                        schema.variables[var].name
                    ),
                )
            })?;
            net.set_attr(node, var, level)?;
        }
        ids.push(id);
    }
    if ids.len() != schema.n {
        return Err(parse_err(
            "attributes",
            ids.len() + 1,
            format!("expected {} rows, found {}", schema.n, ids.len()),
        ));
    }
    Ok(ids)
}

/// Serialize to `(edge list, attribute table)`; ids default to `1..=n`.
pub fn write_network(net: &Network, ids: Option<&[String]>) -> (String, String) {
    let default_ids: Vec<String>;
    let ids = match ids {
        Some(ids) => ids,
        None => {
            default_ids = (1..=net.n()).map(|i| i.to_string()).collect();
            &default_ids
        }
    };
    let mut edges = String::new();
    for (i, j) in net.edges() {
        edges.push_str(&ids[i]);
        edges.push(' ');
        edges.push_str(&ids[j]);
        edges.push('\n');
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend(net.variables().iter().map(|v| v.name.clone()));
    writer.write_record(&header).expect("in-memory write");
    for (i, id) in ids.iter().enumerate().take(net.n()) {
        let mut row = vec![id.clone()];
        row.extend((0..net.variables().len()).map(|v| net.attr(i, v).to_string()));
        writer.write_record(&row).expect("in-memory write");
    }
    let attrs = String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf8");
    (edges, attrs)
}

pub fn read_network_files(
    edges: impl AsRef<Path>,
    attributes: Option<impl AsRef<Path>>,
    schema: &NetworkSchema,
) -> Result<LabeledNetwork> {
    let edge_text = std::fs::read_to_string(&edges).map_err(|e| Error::io(&edges, e))?;
    let attr_text = match &attributes {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    read_network(&edge_text, attr_text.as_deref(), schema).map_err(|e| match e {
        Error::Parse {
            file,
            line,
            message,
        } => {
            let file = if file == "edges" {
                edges.as_ref().display().to_string()
            } else {
                attributes
                    .as_ref()
                    .map(|p| p.as_ref().display().to_string())
                    .unwrap_or(file)
            };
            Error::Parse {
                file,
                line,
                message,
            }
        }
        other => other,
    })
}

pub fn write_network_files(
    net: &Network,
    ids: Option<&[String]>,
    edges: impl AsRef<Path>,
    attributes: impl AsRef<Path>,
) -> Result<()> {
    let (e, a) = write_network(net, ids);
    std::fs::write(&edges, e).map_err(|err| Error::io(&edges, err))?;
    std::fs::write(&attributes, a).map_err(|err| Error::io(&attributes, err))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(n: usize) -> NetworkSchema {
        NetworkSchema {
            n,
            directed: true,
            variables: vec![Variable::new("x", 2)],
        }
    }

    #[test]
    fn reads_small_example() {
        let net = read_network("1 2\n2 3\n", Some("id,x\n1,0\n2,0\n3,1\n"), &schema(3)).unwrap();
        assert_eq!(net.network.edge_count(), 2);
        assert!(net.network.has_edge(0, 1) && net.network.has_edge(1, 2));
        assert_eq!(net.network.attr_column(0), &[0, 0, 1]);
    }

    #[test]
    fn empty_edge_file_gives_isolates() {
        let attrs = "id,x\na,0\nb,1\nc,0\nd,0\ne,1\n";
        let net = read_network("", Some(attrs), &schema(5)).unwrap();
        assert_eq!(net.network.n(), 5);
        assert_eq!(net.network.edge_count(), 0);
        assert_eq!(net.ids[4], "e");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let s = schema(3);
        let attrs = Some("id,x\n1,0\n2,0\n3,1\n");
        let line = |r: Result<LabeledNetwork>| match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line(read_network("1 2\n1 2 3\n", attrs, &s)), 2);
        assert_eq!(line(read_network("1 2\n\n1 2\n", attrs, &s)), 3);
        assert_eq!(line(read_network("1 9\n", attrs, &s)), 1);
        assert_eq!(line(read_network("2 2\n", attrs, &s)), 1);
        assert_eq!(line(read_network("", Some("id,x\n1,0\n2,7\n3,1\n"), &s)), 3);
        assert_eq!(line(read_network("", Some("id,x\n1,0\n2,0\n"), &s)), 3);
    }

    #[test]
    fn undirected_reverse_pair_is_duplicate() {
        let s = NetworkSchema {
            n: 3,
            directed: false,
            variables: vec![],
        };
        assert!(read_network("1 2\n2 1\n", None, &s).is_err());
    }

    #[test]
    fn round_trip() {
        let mut net =
            Network::empty(4, false, vec![Variable::new("a", 3), Variable::new("b", 2)]).unwrap();
        net.set_edge(0, 3, true).unwrap();
        net.set_edge(2, 1, true).unwrap();
        net.set_attr(2, 0, 2).unwrap();
        net.set_attr(1, 1, 1).unwrap();
        let (e, a) = write_network(&net, None);
        let back = read_network(&e, Some(&a), &NetworkSchema::of(&net)).unwrap();
        assert_eq!(back.network, net);
    }
}
