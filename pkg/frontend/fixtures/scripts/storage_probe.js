var storageAvailable = (function () {
  try {
    var probe = "__probe__";
    window.localStorage.setItem(probe, probe);
    window.localStorage.removeItem(probe);
    return true;
  } catch (err) {
    return false;
  }
})();
