//! `trellis serve`: host a framework node until interrupted.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use trellis_net::{Node, Protocol};

use crate::config::{CliConfig, DevicesFile};
use crate::{EXIT_BIND, EXIT_OK, EXIT_USAGE};

/// Broken configuration exits 2 before anything listens; a bind failure
/// exits 3 with nothing left running. An interrupt after startup lets
/// in-flight requests finish, then exits 0.
pub fn serve(config_path: &Path, json: bool) -> u8 {
    let config = match CliConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    init_logging(config.log.as_deref());

    if let Err(e) = std::fs::create_dir_all(&config.audit_dir) {
        eprintln!("cannot create audit dir `{}`: {e}", config.audit_dir.display());
        return EXIT_USAGE;
    }
    let node = match Node::new(config.framework_config(), config.seed, &config.audit_dir) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("{}: {}", e.kind, e.detail);
            return EXIT_USAGE;
        }
    };

    if let Some(path) = &config.devices_file {
        let devices = match DevicesFile::load(path) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_USAGE;
            }
        };
        for profile in devices.devices {
            let device_id = profile.device_id.clone();
            if let Err(e) = node.spawn_device(profile) {
                eprintln!("device `{device_id}`: {}", e.detail);
                return EXIT_USAGE;
            }
        }
        for fault in devices.faults {
            let device_id = fault.device_id.clone();
            if let Err(e) = node.inject_fault(fault) {
                eprintln!("fault on `{device_id}`: {}", e.detail);
                return EXIT_USAGE;
            }
        }
    }

    let http = match node.bind("north", Protocol::RequestWire, &config.listen_http) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("{}", e.detail);
            return EXIT_USAGE;
        }
    };
    let pubsub = match &config.listen_pubsub {
        Some(endpoint) => match node.bind("south", Protocol::PubSubWire, endpoint) {
            Ok(b) => Some(b),
            Err(e) => {
                eprintln!("{}", e.detail);
                return EXIT_USAGE;
            }
        },
        None => None,
    };

    if let Err(e) = node.start() {
        eprintln!("{}", e.detail);
        return EXIT_BIND;
    }

    announce(&node, &http, pubsub.as_deref(), json);
    wait_for_interrupt();
    log::info!("interrupt received, draining");
    node.shutdown();
    EXIT_OK
}

/// RUST_LOG wins over the config's `log` level so an operator can raise
/// verbosity for one run without editing the file.
fn init_logging(config_level: Option<&str>) {
    let mut builder = env_logger::Builder::new();
    if let Some(level) = config_level {
        builder.parse_filters(level);
    } else {
        builder.parse_filters("warn");
    }
    if let Ok(env) = std::env::var("RUST_LOG") {
        builder.parse_filters(&env);
    }
    let _ = builder.try_init();
}

fn announce(
    node: &Node,
    http: &trellis_net::Binding,
    pubsub: Option<&trellis_net::Binding>,
    json: bool,
) {
    let http_addr = http.bound_addr().map(|a| a.to_string()).unwrap_or_default();
    let pubsub_addr = pubsub.and_then(|b| b.bound_addr()).map(|a| a.to_string());
    if json {
        let mut announced = serde_json::json!({
            "serving": true,
            "http": http_addr,
            "services": node.stack.registry.entries().len(),
        });
        if let Some(addr) = &pubsub_addr {
            announced["pubsub"] = serde_json::Value::String(addr.clone());
        }
        println!("{announced}");
    } else {
        println!("serving http on {http_addr}");
        if let Some(addr) = &pubsub_addr {
            println!("serving pubsub on {addr}");
        }
        println!("{} service(s) registered", node.stack.registry.entries().len());
    }
}

/// Parks the main thread until SIGINT. The handler only flips a flag;
/// teardown happens on this thread so binding drains are orderly.
fn wait_for_interrupt() {
    let interrupted = Arc::new(AtomicBool::new(false));
    let flag = interrupted.clone();
    let installed = ctrlc::set_handler(move || {
        flag.store(true, Ordering::SeqCst);
    });
    if installed.is_err() {
        log::warn!("no interrupt handler; waiting forever");
    }
    while !interrupted.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(50));
    }
}
