function poll(url, onData, onError) {
  var xhr = new XMLHttpRequest();
  xhr.open("GET", url, true);
  xhr.onreadystatechange = function () {
    if (xhr.readyState !== 4) {
      return;
    }
    switch (Math.floor(xhr.status / 100)) {
      case 2:
        onData(JSON.parse(xhr.responseText));
        break;
      case 4:
      case 5:
        onError(xhr.status);
        break;
      default:
        onError(0);
    }
  };
  xhr.send(null);
}
