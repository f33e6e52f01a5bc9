use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let status = permlab::cli::run(
        std::env::args_os(),
        &mut io::stdout().lock(),
        &mut io::stderr(),
    );
    ExitCode::from(status.code() as u8)
}
