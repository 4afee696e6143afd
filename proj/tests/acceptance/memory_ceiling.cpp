// Writes a 10^7-row time-tag file, then streams it back through the reader
// and the correlator. Peak resident memory must stay far below the file size.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "photodyn/correlator.hpp"
#include "photodyn/data_io.hpp"

using namespace photodyn;
namespace fs = std::filesystem;

namespace {

// VmHWM from /proc, in kB; 0 where unavailable.
long peak_rss_kb() {
    std::ifstream in("/proc/self/status");
    std::string key;
    while (in >> key) {
        if (key == "VmHWM:") {
            long kb = 0;
            in >> kb;
            return kb;
        }
        std::getline(in, key);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "photodyn_memory";
    fs::create_directories(dir);
    const fs::path file = dir / "big_timetags.csv";
    constexpr std::int64_t rows = 10'000'000;
    constexpr long ceiling_kb = 64 * 1024;

    try {
        std::mt19937_64 rng(1);
        std::exponential_distribution<double> gap(1.0 / 5000.0); // mean 5 ns in ps
        {
            // 1% headroom over the mean span of the exponential gaps
            TimeTagWriter w(file, rows * 5050, {{"source", "memory test"}});
            std::vector<TimeTag> chunk;
            double t = 0;
            for (std::int64_t i = 0; i < rows;) {
                chunk.clear();
                for (int k = 0; k < 65536 && i < rows; ++k, ++i) {
                    t += gap(rng);
                    chunk.push_back({static_cast<std::int64_t>(t), rng() & 1 ? Channel::Detector1 : Channel::Detector0});
                }
                w.write(chunk);
            }
            w.close();
        }
        const auto bytes = fs::file_size(file);

        TimeTagReader reader(file);
        StreamingCorrelator corr(1.0, 500.0);
        std::vector<TimeTag> part;
        std::uint64_t seen = 0;
        while (reader.next(part)) {
            seen += part.size();
            corr.add(part);
        }
        const auto hist = corr.result(reader.duration_ps());
        fs::remove(file);

        const long peak = peak_rss_kb();
        std::cout << "rows " << seen << ", file " << bytes / (1024 * 1024) << " MiB, pairs " << hist.total()
                  << ", peak resident " << peak << " kB (ceiling " << ceiling_kb << " kB)\n";
        if (static_cast<std::int64_t>(seen) != rows) {
            std::cout << "FAIL row count\n";
            return 1;
        }
        if (peak > ceiling_kb) {
            std::cout << "FAIL memory ceiling\n";
            return 1;
        }
        std::cout << "PASS streaming parse within the memory ceiling\n";
        return 0;
    } catch (const std::exception& e) {
        std::error_code ec;
        fs::remove(file, ec);
        std::cout << "FAIL " << e.what() << '\n';
        return 1;
    }
}
