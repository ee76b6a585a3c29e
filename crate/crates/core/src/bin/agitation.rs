use std::process::ExitCode;

fn main() -> ExitCode {
    ambient_agitation::cli::main()
}
