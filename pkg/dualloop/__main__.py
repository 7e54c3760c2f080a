from dualloop.cli import main

main()
