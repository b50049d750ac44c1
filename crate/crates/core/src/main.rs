use std::process::ExitCode;

fn main() -> ExitCode {
    newton_consensus::cli::main_with_args(std::env::args_os())
}
