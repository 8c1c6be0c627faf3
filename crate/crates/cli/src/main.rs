fn main() {
    std::process::exit(xdistill_cli::dispatch(std::env::args_os()));
}
