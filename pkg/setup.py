from setuptools import setup, find_packages
setup(
    name = 'kstop',
    packages = find_packages(exclude=['tests']),
    version = '0.2.0',
    description = 'Learned early termination for top-K graph-based vector search',
    keywords = ['ann', 'hnsw', 'vector search', 'early termination', 'gbdt'],
    classifiers = [ # https://pypi.python.org/pypi?%3Aaction=list_classifiers
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Natural Language :: English',
        'Programming Language :: Python :: 3 :: Only',
        'Topic :: Scientific/Engineering :: Information Analysis',
        'Topic :: Utilities'
    ],
    python_requires = '>=3.6',
    install_requires = [
        'numpy>=1.17',
        'scikit-learn>=0.24'
    ],
    extras_require = {
        'tests': ['pytest'],
        'completion': ['argcomplete']
    },
    entry_points={
        'console_scripts': [
            'kstop = kstop:main'
        ]
    }
)
