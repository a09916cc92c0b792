from setuptools import setup, find_packages

setup(
    name='nhdf-crvanet-sim',
    version='1.0.1',
    description='Discrete-event simulator for spectrum-aware NHDF routing in cognitive-radio VANETs',
    long_description=open('README.md', encoding='utf-8').read(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=['tests']),
    py_modules=['main'],
    include_package_data=True,
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Intended Audience :: Science/Research',
        'Topic :: System :: Networking',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
    ],
    python_requires='>=3.9',
    install_requires=[
        'numpy',
        'PyYAML',
        'psutil',
        'scipy',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': [
            'nhdf-sim = main:main',
        ]
    },
)
