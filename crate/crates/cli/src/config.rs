//! The serve config file: TOML, strict about unknown keys, documented
//! defaults. Everything an operator can set lives here; framework
//! parameters not listed in `[framework]` keep their defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use trellis_core::config::FrameworkConfig;
use trellis_core::sim::{DeviceProfile, FaultSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// Request-wire listen endpoint, e.g. "127.0.0.1:7070".
    pub listen_http: String,
    /// Pub/sub-wire listen endpoint. Omitted means the wire is not served.
    #[serde(default)]
    pub listen_pubsub: Option<String>,
    /// Device fleet file (JSON) spawned at startup.
    #[serde(default)]
    pub devices_file: Option<PathBuf>,
    /// Where audit segments are written. Created if missing.
    #[serde(default = "default_audit_dir")]
    pub audit_dir: PathBuf,
    /// Log filter, same grammar as RUST_LOG. RUST_LOG wins when both are set.
    #[serde(default)]
    pub log: Option<String>,
    /// Fleet seed: fixes simulated readings and timings.
    #[serde(default)]
    pub seed: u64,
    /// Token to consumer id, merged into the framework token table.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
    /// Framework parameter overrides. Partial tables are fine; unset
    /// fields keep their defaults.
    #[serde(default)]
    pub framework: FrameworkConfig,
}

fn default_audit_dir() -> PathBuf {
    PathBuf::from("trellis-audit")
}

impl CliConfig {
    /// Loads and parses a config file. The error string carries the path
    /// and, for parse errors, the line and column.
    pub fn load(path: &Path) -> Result<CliConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config `{}`: {e}", path.display()))
    }

    /// The framework config with the token table folded in.
    pub fn framework_config(&self) -> FrameworkConfig {
        let mut framework = self.framework.clone();
        framework.tokens.extend(self.tokens.clone());
        framework
    }
}

/// The devices file: the simulated fleet a served node hosts, with any
/// scripted faults. Fault windows count from node startup.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DevicesFile {
    pub devices: Vec<DeviceProfile>,
    pub faults: Vec<FaultSpec>,
}

impl DevicesFile {
    pub fn load(path: &Path) -> Result<DevicesFile, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read devices file `{}`: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("devices file `{}`: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let config: CliConfig = toml::from_str("listen_http = \"127.0.0.1:7070\"").unwrap();
        assert_eq!(config.listen_http, "127.0.0.1:7070");
        assert!(config.listen_pubsub.is_none());
        assert!(config.devices_file.is_none());
        assert_eq!(config.audit_dir, PathBuf::from("trellis-audit"));
        assert_eq!(config.seed, 0);
        assert!(config.tokens.is_empty());
        assert_eq!(config.framework, FrameworkConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = toml::from_str::<CliConfig>("listen_http = \"x\"\nlisten_htpp = \"y\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("listen_htpp"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn partial_framework_table_overrides_only_named_fields() {
        let config: CliConfig = toml::from_str(
            "listen_http = \"x\"\n[framework]\nprobe_interval_ms = 250\n",
        )
        .unwrap();
        assert_eq!(config.framework.probe_interval_ms, 250);
        assert_eq!(
            config.framework.default_deadline_ms,
            FrameworkConfig::default().default_deadline_ms
        );
    }

    #[test]
    fn tokens_fold_into_the_framework_table() {
        let config: CliConfig = toml::from_str(
            "listen_http = \"x\"\n[tokens]\n\"tok-a\" = \"app\"\n",
        )
        .unwrap();
        let framework = config.framework_config();
        assert_eq!(framework.tokens.get("tok-a").map(String::as_str), Some("app"));
    }

    #[test]
    fn devices_file_parses_fleet_and_faults() {
        let parsed: DevicesFile = serde_json::from_str(
            r#"{
                "devices": [{
                    "device_id": "therm",
                    "capabilities": [{
                        "capability": "env.temperature",
                        "processing_delay_ms": 10,
                        "generator": {"kind": "constant", "value": 20.0}
                    }]
                }],
                "faults": [{"device_id": "therm", "kind": "crash", "start_ms": 1000, "duration_ms": 5000}]
            }"#,
        )
        .unwrap();
        assert_eq!(parsed.devices.len(), 1);
        assert_eq!(parsed.faults.len(), 1);
    }
}
