//! Reference game subprocess: serves a seeded random value table over the
//! line protocol on stdin/stdout. `external:refgame D SEED` evaluates
//! identically to `random:d=D,seed=SEED`.

use std::io::Write;
use std::process::ExitCode;

use unishap::games::{wire, TabularGame};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let parsed = match args.as_slice() {
        [d, seed] => d.parse::<usize>().ok().zip(seed.parse::<u64>().ok()),
        _ => None,
    };
    let Some((d, seed)) = parsed else {
        eprintln!("usage: refgame D SEED");
        return ExitCode::from(2);
    };
    let game = match TabularGame::random(d, seed) {
        Ok(game) => game,
        Err(e) => {
            eprintln!("refgame: {e}");
            return ExitCode::from(2);
        }
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut output = std::io::BufWriter::new(stdout.lock());
    match wire::serve(&game, stdin.lock(), &mut output) {
        Ok(()) => {
            let _ = output.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("refgame: {e}");
            ExitCode::from(3)
        }
    }
}
