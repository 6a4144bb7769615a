"""Command line, run configuration files and the example corpus."""
