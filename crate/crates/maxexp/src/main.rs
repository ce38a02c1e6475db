use std::process::ExitCode;

fn main() -> ExitCode {
    maxexp::cli::main()
}
