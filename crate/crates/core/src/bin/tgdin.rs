fn main() {
    std::process::exit(tgdin::cli::dispatch(std::env::args_os()));
}
