fn main() {
    std::process::exit(pvlt_cli::app::run(std::env::args_os()));
}
