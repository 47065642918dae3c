fn main() {
    std::process::exit(scene_cli::execute_command(std::env::args_os()));
}
