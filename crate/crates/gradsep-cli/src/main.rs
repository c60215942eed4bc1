fn main() {
    eprintln!("gradsep: command-line interface not wired up yet");
    std::process::exit(64);
}
