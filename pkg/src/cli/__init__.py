"""CLI package - argument parsing, subcommands and console output."""
