use std::fs;
use std::process::ExitCode;

use clap::Parser;
use divcong_cli::args::Cli;
use divcong_cli::error::{invalid, ErrorRecord};
use divcong_cli::report::write_atomic;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let record = ErrorRecord {
                command: std::env::args().nth(1).unwrap_or_default(),
                kind: "usage".to_string(),
                field: None,
                message: e.to_string().trim_end().to_string(),
                exit_code: 2,
            };
            eprintln!("{}", serde_json::to_string_pretty(&record).expect("plain record"));
            return ExitCode::from(2);
        }
    };
    let command = cli.command.name();
    let marker = cli.global.out.join(format!("{command}.error.json"));

    let result = match cli.global.threads {
        Some(0) => Err(invalid("threads", "need at least one thread")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid("threads", e.to_string())),
        None => Ok(()),
    }
    .and_then(|_| divcong_cli::run(cli));

    match result {
        Ok(paths) => {
            // a stale marker from an earlier failed run would contradict this one
            let _ = fs::remove_file(&marker);
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = e.record(command);
            let text = serde_json::to_string_pretty(&record).expect("plain record");
            eprintln!("{text}");
            if let Err(w) = write_atomic(&marker, format!("{text}\n").as_bytes()) {
                eprintln!("could not write {}: {w}", marker.display());
            }
            ExitCode::from(record.exit_code as u8)
        }
    }
}
