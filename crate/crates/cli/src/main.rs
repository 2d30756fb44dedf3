fn main() {
    std::process::exit(rice_game_cli::cli_dispatch(std::env::args_os()));
}
