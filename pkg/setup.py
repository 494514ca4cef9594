from setuptools import setup, find_packages

setup(
    name="iwo-collaborative-filtering",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "numpy>=1.26.0",
        "pandas>=2.1.0",
        "python-dotenv>=1.0.0",
        "joblib>=1.3.0",
        "tqdm>=4.66.0",
        "rich>=13.7.0",
    ],
    entry_points={
        "console_scripts": [
            "iwo-cf=src.cli:main",
        ],
    },
    python_requires=">=3.10",
)
