use clap::Parser;
use cosi_cli::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COSI_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = cosi_cli::run(&cli, &mut std::io::stdout());
    std::process::exit(code);
}
