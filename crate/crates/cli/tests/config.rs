use netlasso::estimator::StageTuning;
use netlasso::inference::DebiasForm;
use netlasso::montecarlo::ModelKind;
use netlasso_cli::config::{Config, SCHEMA_VERSION};
use netlasso_cli::CliError;

const EXAMPLE: &str = include_str!("../../../configs/example.toml");

#[test]
fn example_config_is_valid_and_matches_defaults() {
    let config = Config::parse(EXAMPLE, "example.toml").unwrap();
    assert_eq!(config, Config::default());
}

#[test]
fn minimal_config_uses_defaults() {
    let config = Config::parse("schema_version = 1\n", "min").unwrap();
    assert_eq!(config, Config::default());
    assert_eq!(config.schema_version, SCHEMA_VERSION);
}

#[test]
fn sections_override_defaults() {
    let text = r#"
schema_version = 1
[model]
kind = "cliques"
[tuning]
second_stage = { rule = "fixed", lambda = 0.1 }
[inference]
form = "displayed"
"#;
    let config = Config::parse(text, "t").unwrap();
    assert_eq!(config.model.kind, ModelKind::Cliques);
    assert_eq!(config.tuning.second_stage, StageTuning::Fixed { lambda: 0.1 });
    assert_eq!(config.inference.form, DebiasForm::Displayed);
    assert_eq!(config.inference.level, 0.95);
}

#[test]
fn toml_round_trip() {
    let config = Config::parse(EXAMPLE, "example.toml").unwrap();
    assert_eq!(Config::parse(&config.to_toml().unwrap(), "again").unwrap(), config);
}

fn message(text: &str) -> String {
    match Config::parse(text, "cfg") {
        Err(CliError::Config { message, .. }) => message,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn errors_point_at_lines() {
    let m = message("schema_version = 1\n[study]\nn = \"many\"\n");
    assert!(m.contains("line 3"), "{m}");
    let m = message("schema_version = 1\n[generate]\nn = 10\nleaderz = [1]\n");
    assert!(m.contains("line 4") && m.contains("leaderz"), "{m}");
    let m = message("schema_version = 1\n[sim]\n");
    assert!(m.contains("sim"), "{m}");
}

#[test]
fn values_are_validated() {
    assert!(message("schema_version = 1\n[inference]\nlevel = 1.5\n").contains("[inference]"));
    assert!(message("schema_version = 1\n[study]\nreplications = 0\n").contains("[study]"));
    assert!(message("schema_version = 1\n[tuning]\nfirst_stage = { rule = \"benchmark\", c = -1.0 }\n").contains("[tuning]"));
    assert!(message("schema_version = \"1\"\n").contains("schema_version"));
}
