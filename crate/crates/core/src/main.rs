fn main() {
    std::process::exit(swarm_alloc::cli::cli_main(std::env::args_os()));
}
