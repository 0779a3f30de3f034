#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "floq/errors.hpp"
#include "floq/util.hpp"
#include "floq/version.hpp"

namespace floq {

/// Text artifact with the standard provenance header. All numeric fields go
/// through fmt_g17 so outputs are byte-stable for identical inputs.
class ArtifactWriter {
public:
    ArtifactWriter(const std::filesystem::path& path, const std::string& digest) : path_(path) {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        out_.open(path);
        if (!out_) throw ValidationError("cannot open artifact file '" + path.string() + "'");
        out_ << "# tool=floqlab " << kVersion << "\n";
        out_ << "# digest=" << digest << "\n";
    }

    std::ostream& stream() { return out_; }

    void csv_header(const std::vector<std::string>& cols) {
        for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
        out_ << "\n";
    }

    void csv_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

    void line(const std::string& s) { out_ << s << "\n"; }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

} // namespace floq
