use std::process::ExitCode;

fn main() -> ExitCode {
    contact_kam::cli::run()
}
