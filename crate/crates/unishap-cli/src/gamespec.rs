//! Parsing and construction of `--game` spec strings.

use unishap::games::{AdversarialGame, ExternalGame, ExternalOptions, Game, TabularGame};
use unishap::{Error, Result};

/// Parsed form of a `--game` argument, before any I/O happens.
#[derive(Debug, Clone, PartialEq)]
pub enum GameSpec {
    /// `adversarial:d=64,n=2,xi=1,chi=0` with optional `eps0`.
    Adversarial {
        d: usize,
        n: usize,
        xi: f64,
        chi: f64,
        eps0: f64,
    },
    /// `random:d=12,seed=0`: a seeded uniform value table.
    Random { d: usize, seed: u64 },
    /// `table:PATH`: a `mask,value` CSV loaded from disk.
    Table { path: String },
    /// `external:CMD ARG..`: a subprocess speaking the line protocol.
    External { command: Vec<String> },
}

/// Parses a game spec string into its backend and parameters.
///
/// Key-value backends take comma-separated `key=value` pairs. `table:`
/// treats the whole remainder as a path; `external:` splits it on
/// whitespace into the command line.
pub fn parse(text: &str) -> Result<GameSpec> {
    let (backend, body) = text.split_once(':').ok_or_else(|| {
        Error::Parse(format!(
            "game spec {text:?} has no backend prefix; expected adversarial:, random:, table:, or external:"
        ))
    })?;
    match backend {
        "adversarial" => {
            let mut pairs = parse_pairs(backend, body)?;
            let d = required(backend, &mut pairs, "d")?;
            let n = optional(backend, &mut pairs, "n")?.unwrap_or(1);
            let xi = optional(backend, &mut pairs, "xi")?.unwrap_or(1.0);
            let chi = optional(backend, &mut pairs, "chi")?.unwrap_or(0.0);
            let eps0 = optional(backend, &mut pairs, "eps0")?.unwrap_or(0.5);
            reject_leftover(backend, &pairs)?;
            Ok(GameSpec::Adversarial { d, n, xi, chi, eps0 })
        }
        "random" => {
            let mut pairs = parse_pairs(backend, body)?;
            let d = required(backend, &mut pairs, "d")?;
            let seed = optional(backend, &mut pairs, "seed")?.unwrap_or(0);
            reject_leftover(backend, &pairs)?;
            Ok(GameSpec::Random { d, seed })
        }
        "table" => {
            let path = body.trim();
            if path.is_empty() {
                return Err(Error::Parse("table game spec has an empty path".into()));
            }
            Ok(GameSpec::Table {
                path: path.to_string(),
            })
        }
        "external" => {
            let command: Vec<String> = body.split_whitespace().map(String::from).collect();
            if command.is_empty() {
                return Err(Error::Parse("external game spec has an empty command".into()));
            }
            Ok(GameSpec::External { command })
        }
        other => Err(Error::Parse(format!(
            "unknown game backend {other:?}; expected adversarial, random, table, or external"
        ))),
    }
}

/// Builds the runnable game. `batch_size` caps per-request batches for
/// external subprocess games; the other backends ignore it.
pub fn build(spec: &GameSpec, batch_size: usize) -> Result<Box<dyn Game>> {
    match spec {
        GameSpec::Adversarial { d, n, xi, chi, eps0 } => {
            Ok(Box::new(AdversarialGame::new(*d, *n, *xi, *chi, *eps0)?))
        }
        GameSpec::Random { d, seed } => Ok(Box::new(TabularGame::random(*d, *seed)?)),
        GameSpec::Table { path } => match TabularGame::from_csv_path(path) {
            Ok(game) => Ok(Box::new(game)),
            Err(Error::Capability(message)) => Err(Error::Capability(message)),
            Err(e) => Err(Error::InvalidArgument(format!("game file {path}: {e}"))),
        },
        GameSpec::External { command } => {
            let options = ExternalOptions {
                batch_size,
                ..ExternalOptions::default()
            };
            Ok(Box::new(ExternalGame::spawn(command, options)?))
        }
    }
}

fn parse_pairs<'a>(backend: &str, body: &'a str) -> Result<Vec<(&'a str, &'a str)>> {
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    if body.trim().is_empty() {
        return Ok(pairs);
    }
    for part in body.split(',') {
        let part = part.trim();
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "{backend} game spec: expected key=value, got {part:?}"
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::Parse(format!(
                "{backend} game spec: duplicate key {key:?}"
            )));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn take<'a>(pairs: &mut Vec<(&'a str, &'a str)>, key: &str) -> Option<&'a str> {
    pairs
        .iter()
        .position(|(k, _)| *k == key)
        .map(|i| pairs.remove(i).1)
}

fn required<'a, T: std::str::FromStr>(
    backend: &str,
    pairs: &mut Vec<(&'a str, &'a str)>,
    key: &str,
) -> Result<T> {
    let text = take(pairs, key)
        .ok_or_else(|| Error::Parse(format!("{backend} game spec: missing key {key:?}")))?;
    parse_value(backend, key, text)
}

fn optional<'a, T: std::str::FromStr>(
    backend: &str,
    pairs: &mut Vec<(&'a str, &'a str)>,
    key: &str,
) -> Result<Option<T>> {
    match take(pairs, key) {
        Some(text) => Ok(Some(parse_value(backend, key, text)?)),
        None => Ok(None),
    }
}

fn parse_value<T: std::str::FromStr>(backend: &str, key: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| {
        Error::Parse(format!(
            "{backend} game spec: bad value {text:?} for key {key:?}"
        ))
    })
}

fn reject_leftover(backend: &str, pairs: &[(&str, &str)]) -> Result<()> {
    if let Some((key, _)) = pairs.first() {
        return Err(Error::Parse(format!(
            "{backend} game spec: unknown key {key:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_canonical_adversarial_spec() {
        let spec = parse("adversarial:d=64,n=2,xi=1,chi=0").unwrap();
        assert_eq!(
            spec,
            GameSpec::Adversarial {
                d: 64,
                n: 2,
                xi: 1.0,
                chi: 0.0,
                eps0: 0.5
            }
        );
    }

    #[test]
    fn adversarial_defaults_fill_unspecified_keys() {
        let spec = parse("adversarial:d=16").unwrap();
        assert_eq!(
            spec,
            GameSpec::Adversarial {
                d: 16,
                n: 1,
                xi: 1.0,
                chi: 0.0,
                eps0: 0.5
            }
        );
    }

    #[test]
    fn random_takes_d_and_optional_seed() {
        assert_eq!(
            parse("random:d=12,seed=9").unwrap(),
            GameSpec::Random { d: 12, seed: 9 }
        );
        assert_eq!(
            parse("random:d=12").unwrap(),
            GameSpec::Random { d: 12, seed: 0 }
        );
    }

    #[test]
    fn table_takes_the_raw_remainder_as_path() {
        assert_eq!(
            parse("table:runs/my game.csv").unwrap(),
            GameSpec::Table {
                path: "runs/my game.csv".into()
            }
        );
    }

    #[test]
    fn external_splits_the_command_on_whitespace() {
        assert_eq!(
            parse("external:python3 worker.py --fast").unwrap(),
            GameSpec::External {
                command: vec!["python3".into(), "worker.py".into(), "--fast".into()]
            }
        );
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(parse("adversarial").is_err());
        assert!(parse("adversarial:n=2").is_err());
        assert!(parse("adversarial:d=8,d=9").is_err());
        assert!(parse("adversarial:d=8,width=2").is_err());
        assert!(parse("adversarial:d=eight").is_err());
        assert!(parse("mystery:d=8").is_err());
        assert!(parse("table:").is_err());
        assert!(parse("external: ").is_err());
    }

    #[test]
    fn build_reports_missing_table_files_with_the_path() {
        let spec = GameSpec::Table {
            path: "does/not/exist.csv".into(),
        };
        let err = match build(&spec, 64) {
            Ok(_) => panic!("missing file should not build"),
            Err(e) => e,
        };
        assert!(
            err.to_string().contains("does/not/exist.csv"),
            "{err}"
        );
    }

    #[test]
    fn build_constructs_the_builtin_backends() {
        let game = build(&parse("adversarial:d=10,n=2").unwrap(), 64).unwrap();
        assert_eq!(game.d(), 10);
        let game = build(&parse("random:d=6,seed=3").unwrap(), 64).unwrap();
        assert_eq!(game.d(), 6);
    }
}
