use clap::Parser;
use perfkit_cli::{run, Cli, EXIT_OK};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PERFKIT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("perfkit: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
