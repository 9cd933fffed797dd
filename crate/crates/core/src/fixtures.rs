//! Bundled data sets.
//!
//! The monks fixture encodes the faction structure of Sampson's monastery
//! (Loyal Opposition, Young Turks, Outcasts) as an 18-node directed "liking"
//! network with 88 ties and the Cloisterville attendance indicator. The tie
//! list is a reconstruction from the published faction structure rather than
//! a transcription of the original interview matrices; see the README.

use sha2::{Digest, Sha256};

use crate::io::{read_network, LabeledNetwork, NetworkSchema};
use crate::network::Variable;

pub const MONKS_EDGES: &str = include_str!("../fixtures/monks_edges.txt");
pub const MONKS_ATTRIBUTES: &str = include_str!("../fixtures/monks_attributes.csv");

pub const MONKS_EDGES_SHA256: &str =
    "ec34690bae18182b434bfdb17eb8c13847bb866a88b3ceb2965a1da29ba52984";
pub const MONKS_ATTRIBUTES_SHA256: &str =
    "f34088e2ed11169e4ae61ccfad0244c63983a93fa86d40137630fe917cf63bd9";

/// Faction codes of the `faction` variable.
pub const OUTCASTS: u32 = 0;
pub const LOYAL: u32 = 1;
pub const TURKS: u32 = 2;

pub fn monks_schema() -> NetworkSchema {
    NetworkSchema {
        n: 18,
        directed: true,
        variables: vec![
            Variable::new("cloisterville", 2),
            Variable::new("faction", 3),
        ],
    }
}

pub fn monks() -> LabeledNetwork {
    read_network(MONKS_EDGES, Some(MONKS_ATTRIBUTES), &monks_schema())
        .expect("bundled monks fixture parses")
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
