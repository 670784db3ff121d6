//! `--config FILE` support: each `key=value` line becomes `--key value`
//! inserted right after the subcommand, so flags given on the command line
//! (which come later) override it. Unknown keys fail like unknown flags.

use std::fs;

const COMMANDS: [&str; 7] = ["synth", "fit", "predict", "cv", "diag", "shrink", "bench"];

/// Turns the text of a config file into flag tokens.
pub fn config_tokens(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.starts_with('-') || key.contains(char::is_whitespace) {
            return Err(format!("config line {}: bad key {key:?}", i + 1));
        }
        if matches!(key, "config" | "threads") {
            return Err(format!("config line {}: `{key}` must be given on the command line", i + 1));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_string());
            }
        }
    }
    Ok(out)
}

/// Expands `--config FILE` (or `--config=FILE`) in `argv`.
pub fn splice_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let tokens = config_tokens(&text)?;
    let Some(pos) = argv.iter().position(|a| COMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
