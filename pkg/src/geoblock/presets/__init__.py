"""Shipped Fuchsian group presets (JSON data files, validated at load)."""
