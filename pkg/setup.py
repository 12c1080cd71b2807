from setuptools import setup, find_packages

setup(
    name="ainfell",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.26",
        "mpmath>=1.3",
        "pydantic>=2.10",
        "pydantic-settings>=2.10",
        "python-dotenv>=1.0",
        "typer>=0.16",
        "rich>=14.0",
    ],
    extras_require={"test": ["pytest>=8.0"]},
    entry_points={"console_scripts": ["ainfell=ainfell.cli:app"]},
)
