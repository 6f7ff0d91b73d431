from discredibility.cli import main

main()
