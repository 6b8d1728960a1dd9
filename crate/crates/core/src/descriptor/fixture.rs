//! The four-level example network service bundled with the crate.
//!
//! VNF-B (VNFD#2) grows from IL#1 to IL#3 inside one instance, and NS-IL#4
//! adds a second VNF-B instance. VNF-A and VNF-C stay at one instance.

use super::{load_catalog, Catalog, SourceDocument};

const FILES: [(&str, &str); 7] = [
    ("nsd.json", include_str!("../../fixtures/fig4/nsd.json")),
    ("vnfd-1.json", include_str!("../../fixtures/fig4/vnfd-1.json")),
    ("vnfd-2.json", include_str!("../../fixtures/fig4/vnfd-2.json")),
    ("vnfd-3.json", include_str!("../../fixtures/fig4/vnfd-3.json")),
    ("vld-1.json", include_str!("../../fixtures/fig4/vld-1.json")),
    ("vnffgd-1.json", include_str!("../../fixtures/fig4/vnffgd-1.json")),
    ("vnffgd-2.json", include_str!("../../fixtures/fig4/vnffgd-2.json")),
];

pub const NSD_ID: &str = "NSD#1";
pub const NS_FLAVOR_ID: &str = "NsFlavor#1";

pub fn fig4_documents() -> Vec<SourceDocument> {
    FILES
        .iter()
        .map(|(name, text)| SourceDocument::new(*name, *text))
        .collect()
}

pub fn fig4_catalog() -> Catalog {
    load_catalog(&fig4_documents()).expect("bundled fixture parses")
}
