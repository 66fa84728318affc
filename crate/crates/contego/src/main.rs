use clap::Parser;
use contego::cli;

fn main() {
    let parsed = match cli::Cli::try_parse() {
        Ok(parsed) => parsed,
        Err(e) => {
            // Help and version go to stdout and exit clean; real argument
            // errors exit 1 (2 is reserved for unschedulable inputs).
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(cli::run(parsed));
}
