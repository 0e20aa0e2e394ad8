use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = bilingo::Cli::parse();
    let code = bilingo::run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
