//! Bodies of the fuzz targets. The fuzz crate includes this file by path so
//! the corpus replay test exercises exactly the same code.

use fedshift::attack::GeneratorParams;
use fedshift::checkpoint::Record;
use fedshift::experiments::ExperimentConfig;
use fedshift::gnn::GnnParams;
use fedshift::graph::{parse_tu, Dataset, TuSources};

/// The five TU files separated by NUL bytes, in the order A,
/// graph_indicator, graph_labels, node_attributes, node_labels. The last two
/// are optional.
pub fn parse_tu_input(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.split('\0');
    let src = TuSources {
        name: "FUZZ".into(),
        adjacency: parts.next().unwrap_or_default().into(),
        graph_indicator: parts.next().unwrap_or_default().into(),
        graph_labels: parts.next().unwrap_or_default().into(),
        node_attributes: parts.next().map(Into::into),
        node_labels: parts.next().map(Into::into),
    };
    if let Ok(ds) = parse_tu(&src) {
        let used = ds.graphs().iter().map(|g| g.label()).max().map_or(0, |m| m + 1);
        assert_eq!(ds.num_classes(), used.max(2));
    }
}

pub fn config_toml_input(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        if cfg.validate().is_ok() {
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
    }
}

/// One override per line.
pub fn config_override_input(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for line in text.lines() {
        let _ = ExperimentConfig::parse_override(line);
    }
    let items: Vec<String> = text.lines().map(str::to_string).collect();
    if let Ok(cfg) = ExperimentConfig::default().with_overrides(&items) {
        let _ = cfg.violations();
    }
}

pub fn checkpoint_input(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(record) = Record::decode(text) else { return };
    assert_eq!(Record::decode(&record.encode()).unwrap(), record);
    let _ = GnnParams::from_record(record.clone());
    let _ = GeneratorParams::from_record(record);
}

pub fn dataset_json_input(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = Dataset::from_json(text) {
        let _ = ds.summary();
    }
}
