#!/usr/bin/env python3
"""
Setup script for SecLand CLI tool
Enables global installation as 'secland' command
"""

from setuptools import setup, find_packages
import pathlib

# Read the contents of README file
this_directory = pathlib.Path(__file__).parent
long_description = (this_directory / "README.md").read_text()

setup(
    name="secland-cli",
    version="1.0.0",
    description="Self-supervised secondary landmark learning from multiview geometry",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["secland", "secland.*"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Recognition",
    ],
    python_requires=">=3.8",
    install_requires=[
        "click>=8.1.0",
        "rich>=13.0.0",
        "aiofiles>=24.1.0",
        "numpy>=1.22.0",
        "scipy>=1.8.0",
        "setuptools>=75.3.2",
    ],
    entry_points={
        "console_scripts": [
            "secland=secland.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
    keywords="pose-estimation landmarks multiview triangulation self-supervised cli",
)
