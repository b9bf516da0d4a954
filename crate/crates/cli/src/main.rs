use clap::error::ErrorKind;
use clap::Parser;
use netlasso_cli::{commands, Cli, CliError};

fn fail(err: CliError) -> ! {
    let record = serde_json::to_string(&err.record()).unwrap_or_else(|_| format!("{{\"error\":{{\"message\":{:?}}}}}", err.to_string()));
    eprintln!("{record}");
    std::process::exit(err.exit_code());
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) => e.exit(),
        Err(e) => fail(CliError::Usage(e.render().to_string().trim().to_string())),
    };
    if let Err(e) = commands::run(cli) {
        fail(e);
    }
}
