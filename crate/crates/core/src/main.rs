use std::process::ExitCode;

fn main() -> ExitCode {
    hierspin::cli::main_with_args(std::env::args_os())
}
