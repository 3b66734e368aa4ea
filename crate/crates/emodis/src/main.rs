fn main() {
    std::process::exit(emodis::cli::dispatch(std::env::args_os()));
}
