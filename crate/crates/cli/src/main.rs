fn main() {
    std::process::exit(gdf_cli::main_with_args(std::env::args_os()));
}
