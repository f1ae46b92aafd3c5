use std::process::ExitCode;

fn main() -> ExitCode {
    budgeter_service::cli::main()
}
