fn main() {
    std::process::exit(pathsig::cli::parse_and_dispatch(std::env::args_os()));
}
