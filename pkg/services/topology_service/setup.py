from setuptools import setup, find_packages

setup(
    name="topology_service",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "matplotlib>=3.7",
        "joblib>=1.3",
        "typer>=0.9",
        "rich>=13.0",
        "fastapi>=0.104.1",
        "uvicorn>=0.24.0",
        "pydantic>=2.4.2",
        "httpx>=0.24.1",
        "python-dotenv>=1.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.4", "pytest-cov>=4.1"],
    },
    entry_points={
        "console_scripts": [
            "topoloss=topoloss.cli:app",
        ],
    },
    python_requires=">=3.9",
    author="Topoloss Team",
    description="Regularized topology-aware loss: persistence, diagram matching and the two-phase optimizer",
    keywords="persistent homology, wasserstein, topological loss, t-sne",
)
