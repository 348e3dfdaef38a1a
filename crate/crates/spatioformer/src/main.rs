fn main() {
    std::process::exit(spatioformer::cli::dispatch(std::env::args_os()));
}
