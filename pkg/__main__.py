"""PyInstaller entry point"""
from warpspmv.__main__ import main

main()
