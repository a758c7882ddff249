use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::Failure;

/// Loads a TOML or JSON file (chosen by extension) into `T`. Unknown keys
/// are rejected by the target types.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let parsed = match ext.as_str() {
        "toml" => toml::from_str(&text).map_err(|e| e.to_string()),
        "json" => serde_json::from_str(&text).map_err(|e| e.to_string()),
        _ => {
            return Err(Failure::validation(format!(
                "{}: config files must end in .toml or .json",
                path.display()
            )))
        }
    };
    parsed.map_err(|msg| Failure::validation(format!("{}: {}", path.display(), msg.trim_end())))
}

/// `load` when a path is given, the default otherwise.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    path.map(load).transpose().map(Option::unwrap_or_default)
}

#[cfg(test)]
mod tests {
    use super::*;
    use textbench::benchmark::BenchmarkConfig;
    use textbench::dgp::DgpParams;
    use textbench::sim::{ConfoundingConfig, ConfoundingMode};

    fn file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = file(dir.path(), "c.toml", "mode = \"amplified\"\nn_replicas = 12\n");
        let j = file(dir.path(), "c.json", r#"{"mode": "amplified", "n_replicas": 12}"#);
        let a: ConfoundingConfig = load(&t).unwrap();
        let b: ConfoundingConfig = load(&j).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mode, ConfoundingMode::Amplified);
        assert_eq!(a.selection_strength, ConfoundingConfig::default().selection_strength);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(dir.path(), "d.toml", "n_pairs = 10\nsurprise = 1\n");
        let err = load::<DgpParams>(&p).unwrap_err();
        assert_eq!(err.code, 1);
        assert!(err.message.contains("surprise"), "{}", err.message);

        let p = file(dir.path(), "b.toml", "[confounding]\nkappa = 0.3\n");
        assert!(load::<BenchmarkConfig>(&p).is_err());
    }

    #[test]
    fn bad_extension() {
        let dir = tempfile::tempdir().unwrap();
        let p = file(dir.path(), "c.yaml", "");
        assert_eq!(load::<DgpParams>(&p).unwrap_err().code, 1);
    }
}
