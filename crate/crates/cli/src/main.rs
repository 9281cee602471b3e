fn main() {
    std::process::exit(mdgcl_cli::dispatch(std::env::args_os()));
}
