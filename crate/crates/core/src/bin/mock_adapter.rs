//! Scripted detector adapter used by the protocol tests.
//!
//! Usage: artwalk-mock-adapter <fixed JSON | bad-objectness | sleep MS |
//! crash | garbage | refuse | replay DATASET_DIR>

use artwalk::detect::mock::{serve, MockExit, MockMode};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = match MockMode::from_args(&args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("artwalk-mock-adapter: {e}");
            std::process::exit(1);
        }
    };
    let stdin = std::io::stdin();
    match serve(&mode, stdin.lock(), std::io::stdout().lock()) {
        Ok(MockExit::InputClosed) => {}
        Ok(MockExit::Crashed) => std::process::exit(3),
        // the client hung up mid-reply
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        Err(e) => {
            eprintln!("artwalk-mock-adapter: {e}");
            std::process::exit(2);
        }
    }
}
