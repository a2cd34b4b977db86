use std::process::ExitCode;

fn main() -> ExitCode {
    shflbw::cli::main_with_args(std::env::args_os())
}
