"""Two-tier C-V2X sidelink simulator: link-level BLER campaigns and system-level PRR evaluation."""
__version__ = "0.1.0"
