//! Thin entry point: parse arguments, dispatch, exit with the reported code.

fn main() {
    std::process::exit(blowup_lab::cli::dispatch(std::env::args()));
}
