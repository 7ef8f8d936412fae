fn main() {
    std::process::exit(floquet_nv::cli::run_from_env());
}
